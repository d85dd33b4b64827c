"""Cap covers give upper bounds: every direction inside a covering cap of
radius alpha lights the spike it points into.

Builds greedy covers at d = 3, 4, 5, compares them with the volumetric
estimate and checks that one really lights a spiky body.
"""

import math

from spikyball.body import construct
from spikyball.bounds import covering_numerator, greedy_cap_cover, illuminate_with_cover
from spikyball.caps import cap_measure
from spikyball.sphere import SeedSpec

D = 1.1
alpha = math.asin(1 / D)
for d in (3, 4, 5):
    cover = greedy_cap_cover(d, alpha, seed=SeedSpec(4, d), probes=200_000)
    estimate = covering_numerator(d) / cap_measure(d, alpha)
    body = construct(d, 6, D, SeedSpec(40 + d))
    check = illuminate_with_cover(body, cover, boundary_probes=500, seed=d)
    print(f"d={d}: greedy cover {cover.size} caps (estimate {estimate:.1f}), verified={cover.verified.passed}, "
          f"lights a 6-spike body: {check.passed}")

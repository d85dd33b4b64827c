"""How small are caps on high-dimensional spheres?

Prints the normalized cap measure Omega_d(phi) next to its two-sided
estimates, then shows how fast a cap of fixed angle vanishes as the
dimension grows.
"""

import math

from spikyball.caps import bw_lower, bw_upper, bw_upper_limit, cap_measure

print("cap measure on S^n against its lower/upper estimates")
print(f"{'n':>4} {'phi':>6} {'lower':>12} {'Omega':>12} {'upper':>12}")
for n in (2, 5, 20, 50):
    for phi in (0.3, 0.7, 1.2):
        up = bw_upper(n, phi) if phi <= bw_upper_limit(n) else float("nan")
        print(f"{n:>4} {phi:>6.2f} {bw_lower(n, phi):>12.4e} {cap_measure(n + 1, phi):>12.4e} {up:>12.4e}")

alpha = math.asin(1 / 1.1)
print(f"\ncap of radius alpha = arcsin(1/1.1) = {alpha:.4f}")
for d in (3, 10, 100, 1000):
    om = cap_measure(d, alpha)
    print(f"  d={d:>5}: Omega = {om:.3e}, so at least {1 / om:.3e} caps are needed to cover")

"""Spiky balls: random convex bodies whose illumination number grows exponentially."""

__version__ = "0.1.0"

from .caps import (CapMeasure, DomainError, PreconditionError, bw_lower, bw_upper, cap_measure,
                   chernoff_bound, chernoff_tail, exact_tail, log_cap_measure)
from .sphere import SeedSpec, UnitVector, build_delta_net, sample_uniform, verify_net_coverage
from .body import (Certificate, SpikyBody, certify, check_e1, check_e2_prime, construct,
                   polytopal_variant, unit_ball)
from .oracle import gauge, illuminates, membership_margin, simplex_directions, support
from .bounds import (CapCover, Plan, feasibility_scan, greedy_cap_cover, illuminate_with_cover,
                     illumination_parameter_sum, illumination_upper_bound, plan_parameters)

"""Where does the construction start to say something?

Scans the dimension for D = 1.1 and reports when each condition first holds
for good, and when the guaranteed lower bound D^n/18 exceeds 1.
"""

from spikyball.bounds import feasibility_scan, plan_parameters

scan = feasibility_scan(1.1, range(2, 2001))
for key, n in sorted(scan.onset.items(), key=lambda kv: (kv[1] is None, kv[1] or 0)):
    print(f"  {key:<18} holds from n = {n}")

for n in (31, 100, 500, 2000):
    plan = plan_parameters(1.1, n)
    print(f"n={n:>5}: N has {len(str(plan.N))} digits, theta={plan.theta:.3g}, "
          f"log lower bound={plan.log_lower_bound:.2f}, feasible={plan.feasible}")

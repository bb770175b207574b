"""
CCTV, robot and hybrid monitoring
=================================

Runs the three indoor cases and prints how many breach locations each sensing
configuration found.  Each case takes a few seconds.
"""

# %%
from crowdwatch.runner import run_scenario
from crowdwatch.scenario import bundled

for case in ("table1_case1", "table1_case2", "table1_case3"):
    rep = run_scenario(bundled(case))
    conf = rep.summary["configurations"]
    row = ", ".join(f"{name} {c['breaches']}/{c['runs']}" for name, c in sorted(conf.items()))
    print(f"{case}: {row}")

# %%
# In the third case the gatherings the camera can see and the ones hidden from it are
# disjoint, so the hybrid count is the plain sum of the other two.
print(rep.summary["safety"])

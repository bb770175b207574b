"""
Following a group out of the camera's view
==========================================

A pair walks a corridor that turns out of the CCTV footprint.  With the onboard camera
alone the robot loses them at the corner.  With the CCTV goal it is already on the trail
and switches to its own camera when the pair leaves the footprint.
"""

# %%
from crowdwatch.runner import run_scenario
from crowdwatch.scenario import bundled

blind = run_scenario(bundled("fig8b"))
for r in blind.records:
    if r["event"] in ("LockLost", "GoalSourceChanged"):
        print("rgbd only:", r["t"], r["event"])

# %%
both = run_scenario(bundled("fig8c"))
for r in both.records:
    if r["event"] in ("GoalSourceChanged", "LockLost", "BreachConfirmed"):
        print("hybrid:", r["t"], r["event"], r.get("new", ""))

# %%
# Robot path every two seconds.
for _, t, who, x, y in both.trajectories:
    if who == "robot" and round(t * 10) % 20 == 0:
        print(f"{t:5.1f}  ({x:5.2f}, {y:5.2f})")

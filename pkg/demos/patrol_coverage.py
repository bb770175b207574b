"""
Patrolling what the ceiling camera cannot see
=============================================

Lanes are laid over the part of the region outside the CCTV footprint and checked on a
grid against the onboard camera's reach.
"""

# %%
from crowdwatch.navigation import SpacingTooWide, lawnmower_waypoints
from crowdwatch.runner import coverage_report
from crowdwatch.scenario import bundled, load_scenario

sc = load_scenario(bundled("table1_case3"))
print(coverage_report(sc))

# %%
# Lanes that are too far apart for the sensor are refused outright.
try:
    lawnmower_waypoints((0, 0, 20, 20), lane_spacing=12, sensor_range=5)
except SpacingTooWide as e:
    print("refused:", e)

# %%
plan = lawnmower_waypoints((0, 0, 10, 6), (0, 0, 4, 6), lane_spacing=2, sensor_range=5)
print([(round(p.x, 2), round(p.y, 2)) for p in plan.waypoints])

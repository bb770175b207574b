"""
Grouping close pairs and timing breaches
========================================

Pairs closer than six feet are merged into groups, and a pair only counts as a breach
once it has stayed close for five seconds.
"""

# %%
# Close pairs chain into groups even when the chain is only transitive.
from crowdwatch.monitor import SIX_FEET, MonitorConfig, TimerTable, classify_groups, update_pair_timers
from crowdwatch.perception import PairDistance, Source

for g in classify_groups([(1, 2), (1, 3), (2, 3), (4, 5), (5, 9)]):
    print("group", sorted(g.member_ids))

# %%
# The single pass over the list, kept for comparison, splits a bridged chain.
print(classify_groups([(1, 2), (3, 4), (2, 3)], literal=True))

# %%
# Feed one pair at 10 Hz: close for 5.3 s, then apart.
timers = TimerTable()
for k in range(80):
    t = round(k * 0.1, 3)
    d = 1.2 if t < 5.3 else 2.5
    timers, events = update_pair_timers(timers, [PairDistance(1, 2, d, t, Source.RGBD)], t, MonitorConfig())
    for ev in events:
        print(f"breach {ev.pair} began {ev.t_start:.1f} s, confirmed {ev.t_confirmed:.1f} s")

print(f"threshold {SIX_FEET:.4f} m")

"""
Election latency on a simulated five-node cluster
=================================================

Five hundred seeded elections per mode, starting leaderless at t=0.  The two
modes share sub-seeds, so each pair of runs sees the same draws.
"""

from rwelect import ElectionConfig, UniformRange, run
from rwelect.experiments import election_benchmark
from rwelect.simnet import crash_at

latency = UniformRange(1, 5)
plain = election_benchmark(ElectionConfig(), latency, 500, seed=7)
fast = election_benchmark(ElectionConfig(optimized=True), latency, 500, seed=7)

# %%
for name, s in (("unoptimized", plain), ("optimized", fast)):
    print(f"{name:12s} mean {s.mean_ms:6.1f}  min {s.min_ms:4d}  max {s.max_ms:4d}  "
          f"p90 {s.p90_ms:4d}  split {s.split_vote_fraction:.3f}")

# %%
# Text histogram, 50 ms buckets
peak = max(c for _, _, c in plain.histogram)
for lo, hi, c in plain.histogram:
    print(f"{lo:4d}-{hi:<4d} {'#' * round(40 * c / peak)} {c}")

# %%
# Kill the leader of one run and watch the cluster pick another
_, first = run(ElectionConfig(), 3)
_, again = run(ElectionConfig(), 3, faults=[crash_at(first.leader, first.election_ms + 30)])
print(f"leader {first.leader} elected at {first.election_ms} ms; "
      f"after its crash, {again.leader} takes over in round {again.leader_round}")

# %%
# Three of five down: no majority, nobody is elected
_, stuck = run(ElectionConfig(), 3, faults=[crash_at(n, 0) for n in (0, 1, 2)])
print("blocked:", stuck.blocked)

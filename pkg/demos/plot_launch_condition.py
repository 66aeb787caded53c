"""
How long until a node volunteers?
=================================

A node becomes a candidate once it draws ``streak_len`` numbers in a row
above the threshold.  This script compares the closed-form expectations with
a vectorised Monte Carlo campaign.
"""

import numpy as np

from rwelect.experiments import launch_time_campaign, min_of_k_mean
from rwelect.randomness import expected_draws_to_streak, prob_streak_within, streak_probability

# %%
# Chance of a streak in exactly ``r`` draws
for r in (1, 2, 3):
    print(f"r={r}: {streak_probability(0.15, r):.6f}")

# %%
# Expected draws to the first streak, and the chance of one in 100 draws
for threshold in (0.85, 0.90):
    p = round(1 - threshold, 6)
    print(f"threshold {threshold}: E[draws] = {expected_draws_to_streak(p, 3):8.1f}, "
          f"P(within 100) = {prob_streak_within(p, 3, 100):.4f}")

# %%
# One draw per millisecond, 100k independent nodes
summary = launch_time_campaign(0.85, 3, 1, 100_000, seed=1)
print(f"mean {summary.mean_ms:.1f} ms, p90 {summary.p90_ms} ms, "
      f"within 100 ms {summary.within_100ms:.3f}")

# %%
# The first of five nodes launches much sooner than a typical node
print(f"min-of-5 mean: {min_of_k_mean(summary.samples, 5):.1f} ms")

# %%
# Empirical distribution against the streak DP, on a coarse grid
times = np.asarray(summary.samples)
for n in (50, 100, 200, 400, 800, 1600):
    print(f"P(T <= {n:4d}) empirical {np.mean(times <= n):.3f}  "
          f"exact {prob_streak_within(0.15, 3, n):.3f}")

try:
    import matplotlib.pyplot as plt
except ImportError:
    plt = None

if plt is not None:
    grid = np.arange(0, 2000, 10)
    plt.step(grid, [np.mean(times <= n) for n in grid], label="campaign")
    plt.plot(grid, [prob_streak_within(0.15, 3, int(n)) for n in grid], "--", label="exact")
    plt.xlabel("ms")
    plt.ylabel("fraction launched")
    plt.legend()
    plt.savefig("launch_condition.png")

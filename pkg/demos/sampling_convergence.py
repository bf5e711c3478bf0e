#!/usr/bin/env python3

# How fast does permutation sampling close in on the exact shares?
#
# We draw random coalition games, run the Monte-Carlo estimator with growing
# sample budgets, and watch the worst-coordinate error fall roughly like
# 1/sqrt(k).  The built-in stopping rule (relative change over a lookback
# window) usually fires long before the hard cap.

import numpy as np

from fedshapley import (CoalitionGame, ConvergenceWindow,
                        UniformPermutationSampler, exact_shapley, mc_shapley)

rng = np.random.default_rng(7)
n = 5
table = {}
for mask in range(2 ** n):
    ids = tuple(i + 1 for i in range(n) if mask >> i & 1)
    table[ids] = float(rng.normal() * 10)
game = CoalitionGame.from_table(n, table)
truth = exact_shapley(game).values

print(f"{'samples':>8} {'max error':>10} {'converged':>10}")
for budget in (30, 100, 300, 1000, 3000, 10000):
    est = mc_shapley(game, UniformPermutationSampler(n, seed=1),
                     window=ConvergenceWindow(threshold=1e-9),
                     max_iters=budget)
    err = np.max(np.abs(est.values - truth))
    print(f"{est.sample_count:>8} {err:>10.4f} {str(est.converged):>10}")

# The default stopping rule (5% relative change over a 10-sample window)
# fires very early -- cheap, but clearly looser than the table above.
est = mc_shapley(game, UniformPermutationSampler(n, seed=1), max_iters=100000)
print("\nwith the default stopping rule:")
print("stopped after", est.sample_count, "samples,",
      "max error", round(float(np.max(np.abs(est.values - truth))), 4))

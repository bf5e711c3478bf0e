#!/usr/bin/env python3

# Accuracy/cost trade-off of the estimator family on one benchmark log.
#
# The per-round enumeration (mr) is the oracle here: it rebuilds every
# coalition of every round, 2^n utility evaluations per round.  The sampled
# estimators cut that cost with guided permutations and two truncation
# levels, at a small accuracy price.

import numpy as np

from fedshapley import (ComparisonRow, GtgConfig, ScenarioKind, ScenarioSpec,
                        SyntheticSource, ModelArchitecture, Participant,
                        TrainConfig, generate_source, gtg_eval, gtg_oti,
                        gtg_ti, gtg_tib, mr_eval, partition, run_federation,
                        tmr_eval)

source = SyntheticSource(input_dim=16, class_count=10, spread=1.0, seed=1)
pool, test = generate_source(source, train_per_class=100, test_per_class=10)
spec = ScenarioSpec(kind=ScenarioKind.DIFF_DIST_SAME_SIZE, n=10, seed=1)
participants = [Participant(id=i + 1, dataset=d)
                for i, d in enumerate(partition(pool, spec))]
train = TrainConfig(local_epochs=1, batch_size=32, learning_rate=0.1, seed=101)
log = run_federation(participants, ModelArchitecture(16, 0, 10), train,
                     rounds=10, init_seed=8)

oracle = mr_eval(log, test)
print("oracle (full enumeration):", oracle.eval_count, "evaluations")
print("shares:", np.round(oracle.total.values, 4))

cfg = GtgConfig(seed=123)
runs = [
    gtg_eval(log, test, cfg),    # guided + both truncations
    gtg_tib(log, test, cfg),     # both truncations, unguided
    gtg_ti(log, test, cfg),      # within-round truncation only
    gtg_oti(log, test, cfg),     # one accumulated game
    tmr_eval(log, test),         # decay-weighted enumeration
]

print(f"\n{'estimator':<10} {'cosine':>9} {'euclid':>9} {'evals':>7} {'vs oracle':>10}")
for report in runs:
    row = ComparisonRow.compare(oracle.total, report)
    saving = oracle.eval_count / max(report.eval_count, 1)
    print(f"{report.name:<10} {row.cosine_distance:>9.5f} "
          f"{row.euclidean_distance:>9.5f} {report.eval_count:>7} "
          f"{saving:>9.1f}x")

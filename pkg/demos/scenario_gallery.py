#!/usr/bin/env python3

# The five participant-data scenarios, side by side.
#
# Every scenario starts from the same class-balanced pool and changes one
# thing: nothing, the label mix, the shard sizes, the labels, or the
# features.  Participants come in pairs so effects step up gradually.

import numpy as np

from fedshapley import (ScenarioKind, ScenarioSpec, SyntheticSource,
                        default_noise_rates, default_size_ratios,
                        generate_source, pair_of, partition)

source = SyntheticSource(input_dim=8, class_count=10, spread=1.0, seed=3)
pool, _ = generate_source(source, train_per_class=100, test_per_class=1)
by_row = {row.tobytes(): int(lab)
          for row, lab in zip(pool.features, pool.labels)}

n = 10
for kind in ScenarioKind:
    shards = partition(pool, ScenarioSpec(kind=kind, n=n, seed=3))
    print(f"\n== {kind.value} ==")
    print("sizes:", [len(s) for s in shards])
    if kind is ScenarioKind.DIFF_DIST_SAME_SIZE:
        # label histogram per participant: designated pair classes dominate
        for pid in (1, 5, 9):
            hist = np.bincount(shards[pid - 1].labels, minlength=10)
            print(f"  p{pid} label counts: {hist.tolist()}")
    if kind is ScenarioKind.NOISY_LABELS:
        for pid, shard in enumerate(shards, start=1):
            original = [by_row[r.tobytes()] for r in shard.features]
            flips = int(np.sum(shard.labels != original))
            print(f"  p{pid} (pair {pair_of(pid)}): {flips} flipped labels")
    if kind is ScenarioKind.NOISY_FEATURES:
        rates = default_noise_rates(n)
        for pid in (1, 2, 9, 10):
            pristine = all(r.tobytes() in by_row
                           for r in shards[pid - 1].features)
            print(f"  p{pid}: noise rate {rates[pid - 1]:.2f}, "
                  f"rows untouched: {pristine}")

print("\ndefault size ratios:", default_size_ratios(n))
print("default noise rates: ", default_noise_rates(n))

"""Estimator family tests.

Strategy: hand-built gradient logs with controlled updates give rounds whose
coalition games are known exactly, so sampling-based estimators can be checked
against subset enumeration on the same reconstruction oracle, and the
retraining-based baselines against an independently built retraining game.
"""
from __future__ import annotations

import itertools
import math

import numpy as np
import pytest
from conftest import gaussian_blobs, quick_log, split_participants

from fedshapley import (
    CapacityError,
    CoalitionGame,
    GradientLog,
    GtgConfig,
    LabeledDataset,
    ModelArchitecture,
    Participant,
    RetrainOracle,
    RoundGame,
    RoundRecord,
    TrainConfig,
    estimator_names,
    exact_shapley,
    exact_shapley_by_permutations,
    fedavg_aggregate,
    gtg_eval,
    gtg_oti,
    gtg_round,
    gtg_ti,
    gtg_tib,
    guided_permutation,
    mr_eval,
    nth_partial_permutation,
    original_shapley_eval,
    position_marginal_profile,
    round_marginal_gains,
    run_log_estimator,
    tmc_shapley_eval,
    tmr_eval,
)

EXHAUSTIVE = GtgConfig(eps_between=0.0, eps_within=0.0, sampling="cycle",
                       max_perms_per_round=6, min_samples=6)


def synthetic_log(arch: ModelArchitecture, base: np.ndarray,
                  rounds_updates: list[dict[int, np.ndarray]],
                  weights: dict[int, int]) -> GradientLog:
    records = []
    for t, updates in enumerate(rounds_updates):
        agg = fedavg_aggregate(base, updates, weights)
        records.append(RoundRecord(round=t, base_model=base,
                                   updates=updates, aggregated=agg))
        base = agg
    return GradientLog(architecture=arch, rounds=records,
                       participant_weights=weights)


def small_participants(n: int, seed: int = 0) -> tuple[list[Participant], LabeledDataset]:
    train = gaussian_blobs(6 * n, 5, 3, seed=seed)
    test = gaussian_blobs(8, 5, 3, seed=seed, name="test")
    return split_participants(train, n), test


# --- permutation scheduling ----------------------------------------------------


def test_partial_permutation_ranking_matches_itertools():
    want = sorted(itertools.permutations(range(1, 5), 2))
    got = [nth_partial_permutation(r, 4, 2) for r in range(math.perm(4, 2))]
    assert got == want
    assert [nth_partial_permutation(r, 3, 3) for r in range(6)] == \
        sorted(itertools.permutations((1, 2, 3)))
    with pytest.raises(ValueError):
        nth_partial_permutation(-1, 4, 2)
    with pytest.raises(ValueError):
        nth_partial_permutation(math.perm(4, 2), 4, 2)


def test_guided_leader_cycles_through_participants():
    rng = np.random.default_rng(0)
    n = 10
    orders = [guided_permutation(k, n, 1, rng) for k in range(1, 10 * n + 1)]
    assert all(sorted(o) == list(range(1, n + 1)) for o in orders)
    leaders = [o[0] for o in orders]
    assert leaders[:n] == list(range(1, n + 1))
    # over 10n draws every participant leads exactly 10 times
    assert np.bincount(leaders, minlength=n + 1)[1:].tolist() == [10] * n


def test_guided_longer_prefixes_are_lexicographic():
    rng = np.random.default_rng(1)
    prefixes = [guided_permutation(k, 4, 2, rng)[:2] for k in range(1, 13)]
    assert prefixes == sorted(itertools.permutations(range(1, 5), 2))
    with pytest.raises(ValueError):
        guided_permutation(1, 4, 0, rng)
    with pytest.raises(ValueError):
        guided_permutation(1, 4, 4, rng)


def test_gtg_config_validation():
    with pytest.raises(ValueError):
        GtgConfig(eps_between=-0.1)
    with pytest.raises(ValueError):
        GtgConfig(eps_within=-1.0)
    with pytest.raises(ValueError):
        GtgConfig(guided_prefix=0)
    with pytest.raises(ValueError):
        GtgConfig(max_perms_per_round=0)
    with pytest.raises(ValueError):
        GtgConfig(sampling="metropolis")
    window = GtgConfig(lookback=4, threshold=0.2, min_samples=5).window()
    assert window.lookback == 4 and window.threshold == 0.2


# --- per-round games -----------------------------------------------------------


def test_round_game_costs_two_endpoint_evaluations():
    log, test, _ = quick_log(n=3, rounds=1, seed=0)
    rgame = RoundGame.from_round(log.rounds[0], log.participant_weights,
                                 log.architecture, test)
    assert rgame.game.eval_count == 2      # empty set and grand coalition
    assert rgame.reconstructions == 1      # only the grand coalition rebuilds
    assert rgame.base_utility == rgame.game.value(())
    assert rgame.full_utility == rgame.game.value((1, 2, 3))
    assert rgame.game.eval_count == 2      # those were cache hits


def test_no_gain_round_is_truncated_for_two_evaluations():
    arch = ModelArchitecture(4, 0, 3)
    base = np.zeros(arch.param_count, dtype=np.float32)
    zeros = {i: np.zeros(arch.param_count, dtype=np.float32) for i in (1, 2, 3)}
    log = synthetic_log(arch, base, [zeros], {1: 5, 2: 5, 3: 5})
    test = gaussian_blobs(6, 4, 3, seed=1)
    rgame = RoundGame.from_round(log.rounds[0], log.participant_weights, arch, test)
    vec, stats = gtg_round(rgame, GtgConfig())  # default eps_between 0.001
    assert stats.truncated and stats.sample_count == 0
    assert stats.eval_count == 2 and vec.values.tolist() == [0.0, 0.0, 0.0]


def test_zero_gap_round_without_between_truncation_stays_cheap():
    # eps_between = 0 disables the round-level shortcut, but the first
    # within-round check already sees |vN - v0| = 0 and copies everything
    arch = ModelArchitecture(4, 0, 3)
    base = np.zeros(arch.param_count, dtype=np.float32)
    zeros = {i: np.zeros(arch.param_count, dtype=np.float32) for i in (1, 2, 3)}
    log = synthetic_log(arch, base, [zeros], {1: 5, 2: 5, 3: 5})
    test = gaussian_blobs(6, 4, 3, seed=1)
    rgame = RoundGame.from_round(log.rounds[0], log.participant_weights, arch, test)
    vec, stats = gtg_round(rgame, GtgConfig(eps_between=0.0, sampling="uniform"))
    assert not stats.truncated
    assert stats.eval_count == 2
    assert stats.converged and vec.values.tolist() == [0.0, 0.0, 0.0]


def test_exhaustive_sampling_equals_subset_enumeration():
    log, test, _ = quick_log(n=3, rounds=1, seed=3)
    rec = log.rounds[0]
    sampled = gtg_round(RoundGame.from_round(rec, log.participant_weights,
                                             log.architecture, test), EXHAUSTIVE)[0]
    enumerated = exact_shapley(RoundGame.from_round(
        rec, log.participant_weights, log.architecture, test).game)
    np.testing.assert_allclose(sampled.values, enumerated.values, atol=1e-9)


def test_full_estimator_exact_limit_matches_per_round_enumeration():
    log, test, _ = quick_log(n=3, rounds=2, seed=1)
    exhaustive = gtg_eval(log, test, EXHAUSTIVE)
    reference = mr_eval(log, test)
    np.testing.assert_allclose(exhaustive.total.values, reference.total.values,
                               atol=1e-9)
    for a, b in zip(exhaustive.per_round, reference.per_round):
        np.testing.assert_allclose(a.values, b.values, atol=1e-9)
    # full cycling touches every coalition, same as enumeration
    assert exhaustive.eval_count == reference.eval_count == 2 * 2 ** 3


def test_per_round_enumeration_accounting():
    log, test, _ = quick_log(n=3, rounds=3, seed=2)
    report = mr_eval(log, test)
    assert report.eval_count == 3 * 2 ** 3
    assert report.reconstructions == 3 * (2 ** 3 - 1)
    gains = round_marginal_gains(log, test)
    for vec, gain in zip(report.per_round, gains):
        assert vec.total() == pytest.approx(gain, abs=1e-9)
    assert report.total.total() == pytest.approx(sum(gains), abs=1e-9)
    summed = sum(vec.values for vec in report.per_round)
    np.testing.assert_allclose(report.total.values, summed, atol=1e-12)


def test_decay_weighting_and_round_skipping():
    log, test, _ = quick_log(n=3, rounds=3, seed=4)
    plain = mr_eval(log, test)
    undecayed = tmr_eval(log, test, lam=1.0, round_threshold=0.0)
    np.testing.assert_array_equal(undecayed.total.values, plain.total.values)
    assert undecayed.eval_count == plain.eval_count

    decayed = tmr_eval(log, test, lam=0.5, round_threshold=0.3)
    # lam**2 = 0.25 < 0.3: round 2 skipped outright
    assert decayed.per_round[2].values.tolist() == [0.0, 0.0, 0.0]
    assert decayed.eval_count == 2 * 2 ** 3
    want = plain.per_round[0].values + 0.5 * plain.per_round[1].values
    np.testing.assert_allclose(decayed.total.values, want, atol=1e-12)

    with pytest.raises(ValueError):
        tmr_eval(log, test, lam=0.0)
    with pytest.raises(ValueError):
        tmr_eval(log, test, lam=1.0001)


def test_accumulated_game_equals_per_round_on_single_round_logs():
    log, test, _ = quick_log(n=4, rounds=1, seed=5)
    cfg = GtgConfig(seed=9)
    one_shot = gtg_oti(log, test, cfg)
    per_round = gtg_ti(log, test, cfg)
    np.testing.assert_array_equal(one_shot.total.values, per_round.total.values)
    assert one_shot.eval_count == per_round.eval_count
    assert one_shot.reconstructions == per_round.reconstructions


def test_between_round_truncation_off_reduces_to_within_only():
    log, test, _ = quick_log(n=3, rounds=2, seed=6)
    cfg = GtgConfig(eps_between=0.0, seed=2)
    np.testing.assert_array_equal(gtg_tib(log, test, cfg).total.values,
                                  gtg_ti(log, test, cfg).total.values)


def test_stalled_tail_rounds_cost_two_evaluations_each():
    arch = ModelArchitecture(4, 0, 3)
    rng = np.random.default_rng(3)
    base = np.zeros(arch.param_count, dtype=np.float32)
    live = {i: rng.normal(scale=50, size=arch.param_count).astype(np.float32)
            for i in (1, 2, 3)}
    dead = {i: np.zeros(arch.param_count, dtype=np.float32) for i in (1, 2, 3)}
    log = synthetic_log(arch, base, [live, dead, dead], {1: 5, 2: 5, 3: 5})
    test = gaussian_blobs(8, 4, 3, seed=4)
    report = gtg_tib(log, test, GtgConfig(seed=1))
    assert [s.truncated for s in report.round_stats] == [False, True, True]
    assert [s.eval_count for s in report.round_stats][1:] == [2, 2]
    for vec in report.per_round[1:]:
        assert vec.values.tolist() == [0.0, 0.0, 0.0]


def test_participant_with_zero_updates_scores_exactly_zero():
    # base 0 and two large colinear-free updates: every coalition with the
    # idle participant rescales logits without reordering them, so utilities
    # tie exactly and the idle share is exactly zero
    arch = ModelArchitecture(4, 0, 3)
    rng = np.random.default_rng(8)
    base = np.zeros(arch.param_count, dtype=np.float32)
    updates = {1: (100 * rng.normal(size=arch.param_count)).astype(np.float32),
               2: (100 * rng.normal(size=arch.param_count)).astype(np.float32),
               3: np.zeros(arch.param_count, dtype=np.float32)}
    log = synthetic_log(arch, base, [updates], {1: 7, 2: 7, 3: 7})
    test = gaussian_blobs(10, 4, 3, seed=9)

    enumerated = mr_eval(log, test)
    assert enumerated.total.values[2] == 0.0
    assert np.any(enumerated.total.values[:2] != 0.0)

    sampled = gtg_eval(log, test, EXHAUSTIVE)
    assert sampled.total.values[2] == 0.0


# --- retraining-based baselines --------------------------------------------------


def test_retraining_utility_is_a_function_of_coalition_data():
    parts, test = small_participants(3, seed=1)
    arch = ModelArchitecture(5, 0, 3)
    cfg = TrainConfig(local_epochs=1, batch_size=8, learning_rate=0.2, seed=5)
    oracle = RetrainOracle(parts, arch, cfg, rounds=2, test=test, init_seed=3)
    a = oracle((1, 3))
    b = oracle((3, 1))
    assert a == b
    assert oracle.trainings[0] == 2  # no caching at the oracle layer itself


def test_identical_datasets_share_identical_ground_truth():
    data = gaussian_blobs(9, 5, 3, seed=2)
    other = gaussian_blobs(9, 5, 3, seed=3)
    parts = [Participant(1, data), Participant(2, data), Participant(3, other)]
    test = gaussian_blobs(8, 5, 3, seed=4)
    arch = ModelArchitecture(5, 0, 3)
    cfg = TrainConfig(local_epochs=1, batch_size=8, learning_rate=0.2, seed=6)
    report = original_shapley_eval(parts, arch, cfg, rounds=1, test=test, init_seed=1)
    assert report.total.values[0] == report.total.values[1]
    assert report.eval_count == 2 ** 3
    assert report.reconstructions == 2 ** 3 - 1  # empty coalition skips training


def test_ground_truth_agrees_with_permutation_enumeration():
    parts, test = small_participants(3, seed=7)
    arch = ModelArchitecture(5, 0, 3)
    cfg = TrainConfig(local_epochs=1, batch_size=8, learning_rate=0.2, seed=2)
    report = original_shapley_eval(parts, arch, cfg, rounds=1, test=test, init_seed=5)
    oracle = RetrainOracle(parts, arch, cfg, rounds=1, test=test, init_seed=5)
    reference = exact_shapley_by_permutations(CoalitionGame(3, oracle))
    np.testing.assert_allclose(report.total.values, reference.values, atol=1e-9)
    gain = oracle((1, 2, 3)) - oracle(())
    assert report.total.total() == pytest.approx(gain, abs=1e-9)


def test_truncated_retraining_exact_limit_matches_ground_truth():
    parts, test = small_participants(3, seed=8)
    arch = ModelArchitecture(5, 0, 3)
    cfg = TrainConfig(local_epochs=1, batch_size=8, learning_rate=0.2, seed=1)
    truth = original_shapley_eval(parts, arch, cfg, rounds=1, test=test, init_seed=2)
    sampled = tmc_shapley_eval(parts, arch, cfg, rounds=1, test=test, init_seed=2,
                               cfg=EXHAUSTIVE)
    np.testing.assert_allclose(sampled.total.values, truth.total.values, atol=1e-9)
    assert sampled.eval_count <= truth.eval_count


def test_aggressive_truncation_only_scores_leading_positions():
    parts, test = small_participants(3, seed=9)
    arch = ModelArchitecture(5, 0, 3)
    cfg = TrainConfig(local_epochs=1, batch_size=8, learning_rate=0.2, seed=4)
    sampled = tmc_shapley_eval(
        parts, arch, cfg, rounds=1, test=test, init_seed=7,
        cfg=GtgConfig(eps_within=10.0, sampling="cycle",
                      max_perms_per_round=6, min_samples=6))
    # position 1 always evaluates; everything after it copies forward,
    # leaving 2 endpoints + 3 singleton coalitions = 5 utility calls
    assert sampled.round_stats[0].eval_count == 5
    oracle = RetrainOracle(parts, arch, cfg, rounds=1, test=test, init_seed=7)
    v0 = oracle(())
    want = np.array([(oracle((i,)) - v0) / 3 for i in (1, 2, 3)])
    np.testing.assert_allclose(sampled.total.values, want, atol=1e-12)


def test_retraining_player_guard():
    parts, test = small_participants(11, seed=0)
    arch = ModelArchitecture(5, 0, 3)
    cfg = TrainConfig()
    with pytest.raises(CapacityError):
        original_shapley_eval(parts, arch, cfg, rounds=1, test=test)
    with pytest.raises(CapacityError):
        tmc_shapley_eval(parts, arch, cfg, rounds=1, test=test)


# --- diagnostics and dispatch ----------------------------------------------------


def test_position_profile_telescopes_to_mean_round_gain():
    log, test, _ = quick_log(n=4, rounds=3, seed=10)
    profile = position_marginal_profile(log, test, samples_per_round=10, seed=3)
    again = position_marginal_profile(log, test, samples_per_round=10, seed=3)
    assert profile.shape == (4,)
    np.testing.assert_array_equal(profile, again)
    gains = round_marginal_gains(log, test)
    assert profile.sum() == pytest.approx(np.mean(gains), abs=1e-9)


def test_estimator_registry_and_dispatch():
    assert estimator_names() == ["gtg", "gtg_oti", "gtg_ti", "gtg_tib",
                                 "mr", "tmr", "original", "tmc"]
    log, test, _ = quick_log(n=3, rounds=2, seed=11)
    by_name = run_log_estimator("mr", log, test)
    np.testing.assert_array_equal(by_name.total.values,
                                  mr_eval(log, test).total.values)
    tuned = run_log_estimator("gtg", log, test, {"eps_within": 0.01, "seed": 3})
    np.testing.assert_array_equal(
        tuned.total.values, gtg_eval(log, test, GtgConfig(eps_within=0.01,
                                                          seed=3)).total.values)
    weighted = run_log_estimator("tmr", log, test, {"lam": 0.5})
    np.testing.assert_array_equal(weighted.total.values,
                                  tmr_eval(log, test, lam=0.5).total.values)
    with pytest.raises(ValueError, match="registered"):
        run_log_estimator("original", log, test)


def test_report_totals_match_per_round_sums():
    log, test, _ = quick_log(n=4, rounds=3, seed=12)
    for name in ("gtg", "gtg_ti", "gtg_tib", "gtg_oti", "mr", "tmr"):
        report = run_log_estimator(name, log, test, {})
        summed = sum(vec.values for vec in report.per_round)
        np.testing.assert_allclose(report.total.values, summed, atol=1e-12)
        assert report.eval_count >= report.reconstructions >= 0
        assert report.wall_time >= 0.0
        assert report.name == name

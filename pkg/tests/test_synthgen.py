from fractions import Fraction

import numpy as np
import pytest

from lagcausal.core import CandidateLink
from lagcausal.errors import InsufficientHistoryError, UnstableProcessError
from lagcausal.synthgen import (PROCESS_IDS, TEST_PROCESSES, TRAIN_PROCESSES, GenConfig, build_truth,
                                draw_noise, generate, history_depth, process_lags, sample_parent_sets,
                                simulate, step)


def test_process_split():
    assert set(TRAIN_PROCESSES) | set(TEST_PROCESSES) == set(PROCESS_IDS)
    assert not set(TRAIN_PROCESSES) & set(TEST_PROCESSES)
    assert 17 not in PROCESS_IDS and len(PROCESS_IDS) == 18


def test_p1_hand_value():
    # exact rational evaluation with y(t) = 0 and y(t-1) - 0.5 = -0.5
    y1 = Fraction(-1, 2)
    expected = Fraction(-2, 5) * 3 + Fraction(3, 5) * (3 - y1 ** 3) / (1 + y1 ** 4)
    assert expected == Fraction(48, 85)
    out = step(1, np.zeros((2, 1)), [(0,)], [0.0])
    assert out[0] == pytest.approx(float(expected), abs=1e-15)


def test_step_examples():
    assert step(19, np.array([[1.0], [2.0], [0.0]]), [(0,)], [0.0])[0] == pytest.approx(0.4 * 2 + 0.6 * 1)
    assert step(10, np.array([[-0.5]]), [(0,)], [0.0])[0] == -1.0
    assert step(18, np.array([[2.0, 4.0]]), [(0, 1), (1,)], [0.0, 0.0]) == pytest.approx([2.7, 3.6])
    with pytest.raises(InsufficientHistoryError):
        step(19, np.zeros((1, 1)), [(0,)], [0.0])


def test_zero_noise_p18_is_geometric():
    Y = simulate(18, [(0,)], [[1.0]], np.zeros((30, 1)))
    assert np.allclose(Y[:, 0], 0.9 ** np.arange(30), rtol=0, atol=1e-15)


def test_p16_regime_alternates():
    Y = simulate(16, [(0,)], [[1.0]], np.zeros((5, 1)))
    # t=0 is regime 1 (-0.5), t=1 regime 0 (0.4), ...
    assert np.allclose(Y[:, 0], [1.0, -0.5, -0.2, 0.1, 0.04])


def test_truth_examples():
    assert CandidateLink(0, 1, 1) in build_truth(18, [(1,), (0,)]).edges
    g = build_truth(19, [(0,), (1,), (0,)])
    assert {(0, 2, 2), (0, 3, 2)} <= g.edges
    g = build_truth(3, [(1,), (1,)])
    assert {(1, 2, 0), (1, 3, 0)} <= g.edges
    for pid in PROCESS_IDS:
        lags = process_lags(pid)
        assert max(lags) == history_depth(pid)
        assert len(build_truth(pid, [(0, 1), (1,)])) == 3 * len(lags)


def test_parent_sets(rng):
    for _ in range(50):
        sets = sample_parent_sets(5, 2, rng)
        assert len(sets) == 5
        for j, s in enumerate(sets):
            assert j in s and 1 <= len(s) <= 2 and len(set(s)) == len(s)
        free = sample_parent_sets(4, 3, rng, force_self=False)
        assert all(1 <= len(s) <= 3 for s in free)


@pytest.mark.parametrize("kind", ["gaussian", "laplace", "uniform"])
def test_noise_unit_variance(kind, rng):
    w = draw_noise(kind, 200_000, rng)
    assert abs(w.mean()) < 0.01 and abs(w.var() - 1.0) < 0.02


@pytest.mark.parametrize("pid", PROCESS_IDS)
def test_generated_series_are_bounded_and_reproducible(pid):
    cfg = GenConfig(pid, N=4, T=120, seed=11, max_retries=5000)
    a, b = generate(cfg, 2), generate(cfg, 2)
    assert np.array_equal(a.series.values, b.series.values)
    assert a.truth == b.truth
    assert np.max(np.abs(a.series.values)) <= 1e6
    assert a.series.constant_columns() == []
    assert not np.array_equal(a.series.values, generate(cfg, 3).series.values)


def test_unstable_process_raises():
    with pytest.raises(UnstableProcessError):
        generate(GenConfig(13, N=5, T=250, seed=0, max_retries=1, noise_scale=5.0))


def test_config_validation():
    with pytest.raises(ValueError):
        GenConfig(17)
    with pytest.raises(ValueError):
        GenConfig(1, noise_kind="cauchy")
    with pytest.raises(InsufficientHistoryError):
        GenConfig(19, T=2)


def test_parent_set_edge_cases():
    assert sample_parent_sets(1, 2, np.random.default_rng(0)) == ((0,),)
    a = sample_parent_sets(5, 2, np.random.default_rng(42))
    assert a == sample_parent_sets(5, 2, np.random.default_rng(42))
    assert all(1 <= len(s) <= 2 and set(s) <= set(range(5)) for s in a)


def test_truth_lags_at_most_four():
    assert max(lag for pid in PROCESS_IDS for lag in process_lags(pid)) <= 4


def test_zero_noise_decay_from_constant_row():
    c = 0.7
    Y = simulate(18, [(0,), (1,), (2,)], np.full((1, 3), c), np.zeros((40, 3)))
    assert np.allclose(np.abs(Y), (0.9 ** np.arange(40) * c)[:, None], rtol=0, atol=1e-15)

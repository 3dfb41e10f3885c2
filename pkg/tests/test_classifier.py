import struct

import numpy as np
import pytest

from lagcausal import classifier
from lagcausal.classifier import ForestConfig
from lagcausal.errors import (IncompatibleModelError, InvalidTrainingSetError, ModelFormatError,
                              ShapeError)


@pytest.fixture(scope="module")
def toy():
    rng = np.random.default_rng(0)
    X = rng.standard_normal((400, 6))
    y = (X[:, 0] > 0.3).astype(int)
    return X, y


@pytest.fixture(scope="module")
def model(toy):
    return classifier.fit(*toy, ForestConfig(n_trees=30, seed=4))


def test_single_informative_feature_dominates(model, toy):
    imp = classifier.importance(model)
    assert imp[0] > 0.9
    assert imp.sum() == pytest.approx(1.0)
    rows = classifier.importance_rows(model)
    assert rows[0][:2] == (1, "f0") and [r[0] for r in rows] == list(range(1, 7))
    X, y = toy
    assert np.mean(classifier.predict(model, X) == y) > 0.98


def test_fit_is_deterministic_and_parallel_invariant(toy):
    cfg = ForestConfig(n_trees=8, seed=11)
    a = classifier.fit(*toy, cfg)
    b = classifier.fit(*toy, cfg, jobs=2)
    assert classifier.to_bytes(a) == classifier.to_bytes(b)
    c = classifier.fit(*toy, ForestConfig(n_trees=8, seed=12))
    assert a.fingerprint() != c.fingerprint()


def test_balanced_bootstrap(rng):
    y = np.array([1] * 7 + [0] * 50)
    rows = classifier.balanced_bootstrap(y, rng)
    assert rows.size == 14 and y[rows].sum() == 7


def best_stump(X, y):
    """Exhaustive Gini stump search on the full data (independent oracle)."""
    def gini(lbl):
        if lbl.size == 0:
            return 0.0
        p = lbl.mean()
        return 1 - p * p - (1 - p) * (1 - p)

    best = (np.inf, None, None)
    for f in range(X.shape[1]):
        vals = np.unique(X[:, f])
        for a, b in zip(vals[:-1], vals[1:]):
            t = 0.5 * (a + b)
            left = X[:, f] <= t
            imp = (left.sum() * gini(y[left]) + (~left).sum() * gini(y[~left])) / y.size
            if imp < best[0] - 1e-15:
                best = (imp, f, t)
    return best


def test_root_split_matches_gini_oracle(rng):
    X = np.round(rng.standard_normal((60, 3)), 2)
    y = (X[:, 1] + 0.4 * rng.standard_normal(60) > 0).astype(int)
    rows = np.arange(60)
    tree = classifier.grow_tree(X, y, rows, ForestConfig(max_depth=1, features_per_split=3), rng)[0]
    _, f, t = best_stump(X, y)
    assert tree.feature[0] == f and tree.threshold[0] == pytest.approx(t)


def test_leaf_probabilities_and_depth(toy):
    m = classifier.fit(*toy, ForestConfig(n_trees=3, max_depth=0, seed=1))
    # depth 0: every tree is a balanced-bootstrap root leaf
    assert np.allclose(classifier.predict_proba(m, toy[0][:5]), 0.5)


def test_roundtrip(tmp_path, model, toy):
    p = tmp_path / "m.lcrf"
    classifier.save(model, p)
    back = classifier.load(p)
    assert classifier.to_bytes(back) == classifier.to_bytes(model)
    assert np.array_equal(classifier.predict_proba(back, toy[0]), classifier.predict_proba(model, toy[0]))
    assert back.train_meta["bootstrap_per_class"] == min(toy[1].sum(), 400 - toy[1].sum())


def test_corrupt_files(model):
    data = classifier.to_bytes(model)
    with pytest.raises(ModelFormatError) as exc:
        classifier.from_bytes(data[: len(data) // 2])
    assert "byte offset" in str(exc.value)
    with pytest.raises(ModelFormatError):
        classifier.from_bytes(b"XXXX" + data[4:])
    flipped = bytearray(data)
    flipped[100] ^= 0xFF
    with pytest.raises(ModelFormatError):
        classifier.from_bytes(bytes(flipped))
    newer = data[:4] + struct.pack("<H", classifier.FORMAT_VERSION + 1) + data[6:]
    with pytest.raises(IncompatibleModelError):
        classifier.from_bytes(newer)


def test_input_validation(toy, model):
    X, y = toy
    with pytest.raises(InvalidTrainingSetError):
        classifier.fit(X, np.zeros(400, int))
    with pytest.raises(InvalidTrainingSetError):
        classifier.fit(X, np.full(400, 2))
    bad = X.copy()
    bad[0, 0] = np.nan
    with pytest.raises(InvalidTrainingSetError):
        classifier.fit(bad, y)
    with pytest.raises(ShapeError):
        classifier.predict_proba(model, X[:, :5])
    with pytest.raises(IncompatibleModelError):
        classifier.require_features(model, ["a"] * 6)
    with pytest.raises(ValueError):
        ForestConfig(n_trees=0)


def test_bootstrap_sizes_on_imbalanced_set():
    y = np.array([1] * 100 + [0] * 900)
    rng = np.random.default_rng(3)
    for _ in range(20):
        rows = classifier.balanced_bootstrap(y, rng)
        assert rows.size == 200 and y[rows].sum() == 100


def test_separable_toy_and_unused_feature():
    X = np.array([[0.0, 5.0], [1.0, 5.0], [2.0, 5.0], [10.0, 5.0], [11.0, 5.0], [12.0, 5.0]])
    y = np.array([0, 0, 0, 1, 1, 1])
    m = classifier.fit(X, y, ForestConfig(n_trees=15, seed=2))
    assert np.array_equal(classifier.predict(m, X), y)
    assert m.importances[1] == 0.0 and m.importances[0] == pytest.approx(1.0)
    assert classifier.predict_proba(m, [[100.0, 5.0]])[0] == 1.0
    assert classifier.predict_proba(m, [[-100.0, 5.0]])[0] == 0.0


def test_probability_bounds_and_split_indices(model):
    X = np.random.default_rng(5).standard_normal((500, 6)) * 10
    p = classifier.predict_proba(model, X)
    assert np.all((p >= 0) & (p <= 1))
    for t in model.trees:
        assert np.all(t.feature < 6) and np.all(t.feature >= -1)

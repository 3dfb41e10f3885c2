"""Balanced random forest for binary link classification.

Every tree is grown on a class-balanced bootstrap: the minority class size
``n_min`` is drawn with replacement from each class.  Trees are plain Gini
CART trees with ``features_per_split`` candidate features per node.

Model files are a small versioned binary format::

    magic  b"LCRF"           4 bytes
    version                  uint16
    header length            uint32
    header                   UTF-8 JSON (feature names, config, metadata)
    per tree: n_nodes        uint32
              feature        int32[n]   (-1 marks a leaf)
              threshold      float64[n]
              left, right    int32[n] each
              counts         float64[n, 2]
    crc32 of all bytes above uint32

All integers are little endian.
"""
from __future__ import annotations

import hashlib
import json
import math
import struct
import zlib
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from numba import njit

from .errors import IncompatibleModelError, InvalidTrainingSetError, ModelFormatError, ShapeError

MAGIC = b"LCRF"
FORMAT_VERSION = 1


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 100
    max_depth: int | None = None
    min_samples_leaf: int = 1
    features_per_split: int | None = None  # None: ceil(sqrt(n_features))
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be >= 1")
        if self.max_depth is not None and self.max_depth < 0:
            raise ValueError("max_depth must be >= 0")
        if self.features_per_split is not None and self.features_per_split < 1:
            raise ValueError("features_per_split must be >= 1")

    def mtry(self, n_features: int) -> int:
        if self.features_per_split is None:
            return max(1, math.ceil(math.sqrt(n_features)))
        return min(self.features_per_split, n_features)


@dataclass
class Tree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    counts: np.ndarray  # (n_nodes, 2): weighted negatives, positives

    @property
    def n_nodes(self) -> int:
        return self.feature.size


@dataclass
class ForestModel:
    trees: list
    feature_names: tuple
    importances: np.ndarray
    config: ForestConfig
    train_meta: dict = field(default_factory=dict)

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    def fingerprint(self) -> str:
        return hashlib.sha256(to_bytes(self)).hexdigest()


# -- split search -----------------------------------------------------------------

@njit(cache=True)
def _best_split(X, y, rows, feats, min_leaf):
    """Best Gini split over ``feats`` (ascending); returns (feature, threshold, score).

    The score is ``sum over children of sum_c n_c^2 / n_child`` which is
    maximized by the split of smallest weighted Gini impurity.  Ties keep
    the earliest candidate: lowest feature index, then smallest threshold.
    """
    n = rows.size
    best_f = -1
    best_t = 0.0
    best_s = -1.0
    vals = np.empty(n)
    lab = np.empty(n, np.int64)
    tot_pos = 0
    for r in range(n):
        tot_pos += y[rows[r]]
    for f in feats:
        for r in range(n):
            vals[r] = X[rows[r], f]
        order = np.argsort(vals, kind="mergesort")
        sv = vals[order]
        for r in range(n):
            lab[r] = y[rows[order[r]]]
        lp = 0
        for r in range(n - 1):
            lp += lab[r]
            nl = r + 1
            if sv[r + 1] == sv[r]:
                continue
            nr = n - nl
            if nl < min_leaf or nr < min_leaf:
                continue
            rp = tot_pos - lp
            ln = nl - lp
            rn = nr - rp
            s = (lp * lp + ln * ln) / nl + (rp * rp + rn * rn) / nr
            if s > best_s:
                best_s = s
                best_f = f
                t = 0.5 * (sv[r] + sv[r + 1])
                if t >= sv[r + 1]:
                    t = sv[r]
                best_t = t
    return best_f, best_t, best_s


@njit(cache=True)
def _apply(feature, threshold, left, right, X):
    out = np.empty(X.shape[0], np.int64)
    for r in range(X.shape[0]):
        node = 0
        while feature[node] >= 0:
            if X[r, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[r] = node
    return out


def _gini(neg, pos):
    n = neg + pos
    if n == 0:
        return 0.0
    return 1.0 - (neg / n) ** 2 - (pos / n) ** 2


def grow_tree(X: np.ndarray, y: np.ndarray, rows: np.ndarray, cfg: ForestConfig,
              rng: np.random.Generator):
    """Grow one tree on ``X[rows]``; ``rows`` may repeat (bootstrap).

    Returns the tree and its unnormalized impurity-decrease per feature.
    """
    p = X.shape[1]
    mtry = cfg.mtry(p)
    max_depth = cfg.max_depth if cfg.max_depth is not None else np.iinfo(np.int64).max
    feature, threshold, left, right, counts = [], [], [], [], []
    decrease = np.zeros(p)

    def new_node(node_rows):
        pos = int(y[node_rows].sum())
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        counts.append((float(node_rows.size - pos), float(pos)))
        return len(feature) - 1

    root = new_node(rows)
    stack = [(root, rows, 0)]
    while stack:
        node, node_rows, depth = stack.pop()
        neg, pos = counts[node]
        if pos == 0 or neg == 0 or depth >= max_depth or node_rows.size < 2 * cfg.min_samples_leaf:
            continue
        perm = rng.permutation(p)
        f = -1
        start = 0
        # fall back to further features only when the drawn ones cannot split
        while f < 0 and start < p:
            feats = np.sort(perm[start:start + mtry]).astype(np.int64)
            f, t, _ = _best_split(X, y, node_rows, feats, cfg.min_samples_leaf)
            start += mtry
        if f < 0:
            continue
        go_left = X[node_rows, f] <= t
        lrows, rrows = node_rows[go_left], node_rows[~go_left]
        feature[node], threshold[node] = int(f), float(t)
        l = new_node(lrows)
        r = new_node(rrows)
        left[node], right[node] = l, r
        n = node_rows.size
        decrease[f] += (n * _gini(neg, pos) - lrows.size * _gini(*counts[l])
                        - rrows.size * _gini(*counts[r]))
        # right first so the left subtree is numbered first
        stack.append((r, rrows, depth + 1))
        stack.append((l, lrows, depth + 1))
    tree = Tree(np.array(feature, dtype=np.int32), np.array(threshold, dtype=np.float64),
                np.array(left, dtype=np.int32), np.array(right, dtype=np.int32),
                np.array(counts, dtype=np.float64).reshape(-1, 2))
    return tree, decrease


def balanced_bootstrap(y: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """``n_min`` draws with replacement from each class, minority first."""
    pos = np.flatnonzero(y == 1)
    neg = np.flatnonzero(y == 0)
    n_min = min(pos.size, neg.size)
    rows = np.concatenate([rng.choice(pos, n_min, replace=True), rng.choice(neg, n_min, replace=True)])
    assert int(y[rows].sum()) == n_min and rows.size == 2 * n_min
    return rows


def _tree_unit(args):
    X, y, cfg, seed_seq = args
    rng = np.random.default_rng(seed_seq)
    rows = balanced_bootstrap(y, rng)
    return grow_tree(X, y, rows, cfg, rng)


def _data_fingerprint(X, y) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(X, dtype=np.float64).tobytes())
    h.update(np.ascontiguousarray(y, dtype=np.int64).tobytes())
    return h.hexdigest()


def fit(X, y, cfg: ForestConfig | None = None, feature_names=None, jobs: int = 1,
        extra_meta: dict | None = None) -> ForestModel:
    """Train a balanced forest.

    Parameters
    ----------
    X : array_like, shape (n, p)
    y : array_like of {0, 1}
    feature_names : sequence of str, optional
        Stored in the model and checked at prediction time.
    jobs : int
        Worker processes; trees are independent units.
    """
    from .parallel import map_ordered

    cfg = cfg or ForestConfig()
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.asarray(y).astype(np.int64)
    if X.ndim != 2 or y.shape != (X.shape[0],):
        raise ShapeError(f"X must be (n, p) and y (n,), got {X.shape} and {y.shape}")
    if not np.all(np.isin(y, (0, 1))):
        raise InvalidTrainingSetError("labels must be 0 or 1")
    n_pos = int(y.sum())
    if n_pos == 0 or n_pos == y.size:
        raise InvalidTrainingSetError("training set needs at least one example of each class")
    if not np.all(np.isfinite(X)):
        raise InvalidTrainingSetError("feature matrix contains non-finite values")
    names = tuple(feature_names) if feature_names is not None else tuple(f"f{c}" for c in range(X.shape[1]))
    if len(names) != X.shape[1]:
        raise ShapeError(f"{len(names)} feature names for {X.shape[1]} columns")
    seeds = np.random.SeedSequence(cfg.seed).spawn(cfg.n_trees)
    grown = map_ordered(_tree_unit, [(X, y, cfg, s) for s in seeds], jobs)
    trees = [t for t, _ in grown]
    imp = np.zeros(X.shape[1])
    for _, dec in grown:
        total = dec.sum()
        if total > 0:
            imp += dec / total
    imp = imp / imp.sum() if imp.sum() > 0 else np.full(X.shape[1], 1.0 / X.shape[1])
    meta = {"n_examples": int(y.size), "n_positive": n_pos, "data_sha256": _data_fingerprint(X, y),
            "bootstrap_per_class": min(n_pos, int(y.size) - n_pos)}
    meta.update(extra_meta or {})
    return ForestModel(trees, names, imp, cfg, meta)


def _check_width(model: ForestModel, X):
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != model.n_features:
        raise ShapeError(f"model expects {model.n_features} features, got shape {X.shape}")
    return X


def predict_proba(model: ForestModel, X) -> np.ndarray:
    """Mean over trees of the positive share of the reached leaf."""
    X = _check_width(model, X)
    acc = np.zeros(X.shape[0])
    for tree in model.trees:
        leaves = _apply(tree.feature, tree.threshold, tree.left, tree.right, X)
        c = tree.counts[leaves]
        acc += c[:, 1] / (c[:, 0] + c[:, 1])
    return np.clip(acc / len(model.trees), 0.0, 1.0)


def predict(model: ForestModel, X, threshold: float = 0.5) -> np.ndarray:
    return (predict_proba(model, X) > threshold).astype(int)


def importance(model: ForestModel) -> np.ndarray:
    """Mean decrease in Gini impurity per feature, normalized to sum 1."""
    return model.importances.copy()


def importance_rows(model: ForestModel) -> list:
    """``(rank, name, score)`` sorted by decreasing score, ties by name order."""
    order = sorted(range(model.n_features), key=lambda c: (-model.importances[c], c))
    return [(r + 1, model.feature_names[c], float(model.importances[c])) for r, c in enumerate(order)]


# -- serialization ----------------------------------------------------------------

def to_bytes(model: ForestModel) -> bytes:
    header = {
        "feature_names": list(model.feature_names),
        "config": asdict(model.config),
        "train_meta": model.train_meta,
        "n_trees": len(model.trees),
        "importances": [float(v) for v in model.importances],
    }
    hb = json.dumps(header, sort_keys=True).encode("utf-8")
    parts = [MAGIC, struct.pack("<HI", FORMAT_VERSION, len(hb)), hb]
    for t in model.trees:
        parts.append(struct.pack("<I", t.n_nodes))
        parts.append(t.feature.astype("<i4").tobytes())
        parts.append(t.threshold.astype("<f8").tobytes())
        parts.append(t.left.astype("<i4").tobytes())
        parts.append(t.right.astype("<i4").tobytes())
        parts.append(t.counts.astype("<f8").tobytes())
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body))


def from_bytes(data: bytes) -> ForestModel:
    if len(data) < 4 or data[:4] != MAGIC:
        raise ModelFormatError("not a forest model file (bad magic)", 0)
    pos = 4

    def take(n, what):
        nonlocal pos
        if pos + n > len(data):
            raise ModelFormatError(f"file truncated while reading {what}", pos)
        chunk = data[pos:pos + n]
        pos += n
        return chunk

    (version,) = struct.unpack("<H", take(2, "version"))
    if version != FORMAT_VERSION:
        raise IncompatibleModelError(f"model format version {version}, this build reads {FORMAT_VERSION}")
    if len(data) < 4 + 4 + 6:
        raise ModelFormatError("file truncated", len(data))
    body, (crc,) = data[:-4], struct.unpack("<I", data[-4:])
    (hlen,) = struct.unpack("<I", take(4, "header length"))
    hstart = pos
    raw = take(hlen, "header")
    if zlib.crc32(body) != crc:
        raise ModelFormatError("checksum mismatch; file is corrupt or truncated", len(data) - 4)
    try:
        header = json.loads(raw.decode("utf-8"))
        cfg = ForestConfig(**header["config"])
        names = tuple(header["feature_names"])
        n_trees = int(header["n_trees"])
        imp = np.array(header["importances"], dtype=float)
    except (ValueError, KeyError, TypeError) as exc:
        raise ModelFormatError(f"unreadable header: {exc}", hstart) from None
    p = len(names)
    trees = []
    for k in range(n_trees):
        start = pos
        (n,) = struct.unpack("<I", take(4, f"tree {k} size"))
        feat = np.frombuffer(take(4 * n, f"tree {k} features"), "<i4").astype(np.int32)
        thr = np.frombuffer(take(8 * n, f"tree {k} thresholds"), "<f8").astype(np.float64)
        left = np.frombuffer(take(4 * n, f"tree {k} children"), "<i4").astype(np.int32)
        right = np.frombuffer(take(4 * n, f"tree {k} children"), "<i4").astype(np.int32)
        counts = np.frombuffer(take(16 * n, f"tree {k} counts"), "<f8").astype(np.float64).reshape(n, 2)
        inner = feat >= 0
        if n == 0 or np.any(feat[inner] >= p) or np.any(feat < -1) \
                or np.any((left[inner] <= 0) | (left[inner] >= n) | (right[inner] <= 0) | (right[inner] >= n)):
            raise ModelFormatError(f"tree {k} has invalid node references", start)
        trees.append(Tree(feat, thr, left, right, counts))
    if pos != len(body):
        raise ModelFormatError("trailing bytes after the last tree", pos)
    return ForestModel(trees, names, imp, cfg, header.get("train_meta", {}))


def save(model: ForestModel, path):
    Path(path).write_bytes(to_bytes(model))


def load(path) -> ForestModel:
    return from_bytes(Path(path).read_bytes())


def require_features(model: ForestModel, names) -> None:
    if tuple(names) != model.feature_names:
        raise IncompatibleModelError("model feature names do not match the descriptor layout")

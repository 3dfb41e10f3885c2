"""Kraskov-Stoegbauer-Grassberger mutual information (first variant).

Distances are max-norm in the joint and marginal spaces; marginal counts
are strict (``< eps``).  Small samples go through a compiled sorted-sweep
kernel, larger ones through a KD-tree.  Both produce the same counts as the
plain O(n^2) reference kernel.

Estimates are assembled from integer count histograms, which makes them
exactly symmetric in ``(x, y)`` and exactly invariant to row permutations.
"""
from __future__ import annotations

import hashlib
from functools import lru_cache

import numpy as np
from numba import njit
from scipy import special
from scipy.spatial import cKDTree

from .errors import InsufficientSamplesError

DEFAULT_K = 3
# below this sample count the compiled sweep beats tree construction
BRUTE_FORCE_MAX = 1024
JITTER_SCALE = 1e-10


def digamma(x: float) -> float:
    """Digamma function for ``x > 0``."""
    x = float(x)
    if not x > 0:
        raise ValueError(f"digamma is only defined here for x > 0, got {x}")
    return float(special.digamma(x))


@lru_cache(maxsize=64)
def _digamma_table(n: int) -> np.ndarray:
    """``table[m] == psi(m)`` for ``m = 1..n``; entry 0 is unused."""
    table = np.zeros(n + 1)
    table[1:] = special.digamma(np.arange(1, n + 1, dtype=float))
    table.setflags(write=False)
    return table


@njit(cache=True)
def _brute_counts(x, y, k):
    n = x.shape[0]
    dx = x.shape[1]
    dy = y.shape[1]
    nx = np.zeros(n, np.int64)
    ny = np.zeros(n, np.int64)
    mx = np.empty(n)
    my = np.empty(n)
    best = np.empty(k)
    for s in range(n):
        for m in range(k):
            best[m] = np.inf
        for r in range(n):
            a = 0.0
            for c in range(dx):
                d = abs(x[r, c] - x[s, c])
                if d > a:
                    a = d
            b = 0.0
            for c in range(dy):
                d = abs(y[r, c] - y[s, c])
                if d > b:
                    b = d
            mx[r] = a
            my[r] = b
            if r == s:
                continue
            j = a if a > b else b
            if j < best[k - 1]:
                m = k - 1
                while m > 0 and best[m - 1] > j:
                    best[m] = best[m - 1]
                    m -= 1
                best[m] = j
        eps = best[k - 1]
        cx = 0
        cy = 0
        for r in range(n):
            if r == s:
                continue
            if mx[r] < eps:
                cx += 1
            if my[r] < eps:
                cy += 1
        nx[s] = cx
        ny[s] = cy
    return nx, ny


@njit(cache=True)
def _sweep_counts(x, y, k):
    # same counts as _brute_counts; rows are visited in order of the first
    # coordinate so the search stops once that gap alone exceeds the radius
    n = x.shape[0]
    dx = x.shape[1]
    dy = y.shape[1]
    ox = np.argsort(x[:, 0], kind="mergesort")
    oy = np.argsort(y[:, 0], kind="mergesort")
    px = np.empty(n, np.int64)
    py = np.empty(n, np.int64)
    for p in range(n):
        px[ox[p]] = p
        py[oy[p]] = p
    xs = np.empty((n, dx))
    ys = np.empty((n, dy))
    for p in range(n):
        for c in range(dx):
            xs[p, c] = x[ox[p], c]
        for c in range(dy):
            ys[p, c] = y[oy[p], c]
    nx = np.zeros(n, np.int64)
    ny = np.zeros(n, np.int64)
    best = np.empty(k)
    for s in range(n):
        for m in range(k):
            best[m] = np.inf
        p = px[s]
        for step in (-1, 1):
            q = p + step
            while 0 <= q < n:
                j = abs(xs[q, 0] - xs[p, 0])
                if j >= best[k - 1]:
                    break
                r = ox[q]
                for c in range(1, dx):
                    d = abs(x[r, c] - x[s, c])
                    if d > j:
                        j = d
                for c in range(dy):
                    d = abs(y[r, c] - y[s, c])
                    if d > j:
                        j = d
                if j < best[k - 1]:
                    m = k - 1
                    while m > 0 and best[m - 1] > j:
                        best[m] = best[m - 1]
                        m -= 1
                    best[m] = j
                q += step
        eps = best[k - 1]
        nx[s] = _strict_count(xs, p, eps)
        ny[s] = _strict_count(ys, py[s], eps)
    return nx, ny


@njit(cache=True)
def _strict_count(sorted_block, p, eps):
    n, dim = sorted_block.shape
    total = 0
    for step in (-1, 1):
        q = p + step
        while 0 <= q < n:
            if abs(sorted_block[q, 0] - sorted_block[p, 0]) >= eps:
                break
            inside = True
            for c in range(1, dim):
                if abs(sorted_block[q, c] - sorted_block[p, c]) >= eps:
                    inside = False
                    break
            if inside:
                total += 1
            q += step
    return total


def _tree_counts(x, y, k):
    joint = np.hstack([x, y])
    dist, _ = cKDTree(joint).query(joint, k=k + 1, p=np.inf)
    eps = dist[:, k]
    radius = np.nextafter(eps, -np.inf)
    nx = cKDTree(x).query_ball_point(x, radius, p=np.inf, return_length=True) - 1
    ny = cKDTree(y).query_ball_point(y, radius, p=np.inf, return_length=True) - 1
    return np.asarray(nx, dtype=np.int64), np.asarray(ny, dtype=np.int64)


def _as_block(a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2:
        raise ValueError(f"sample block must be 1-D or 2-D, got shape {a.shape}")
    return a


def _dejitter(a: np.ndarray) -> np.ndarray:
    """Break exact ties with a tiny deterministic perturbation.

    Only columns holding duplicate values are touched; the perturbation is
    seeded from a hash of the column so equal inputs give equal outputs.
    """
    out = None
    for c in range(a.shape[1]):
        col = a[:, c]
        if np.unique(col).size == col.size:
            continue
        if out is None:
            out = np.array(a, copy=True)
        seed = int.from_bytes(hashlib.sha256(np.ascontiguousarray(col).tobytes()).digest()[:8], "little")
        scale = np.std(col)
        if scale == 0.0:
            scale = 1.0
        noise = np.random.default_rng(seed).standard_normal(col.size)
        out[:, c] = col + JITTER_SCALE * scale * noise
    return a if out is None else out


def prepare_block(a) -> np.ndarray:
    """2-D float copy of ``a`` with exact ties broken; see :func:`ksg_mi`."""
    return np.ascontiguousarray(_dejitter(_as_block(a)))


def ksg_counts(x, y, k: int = DEFAULT_K, prepared: bool = False):
    """Strict marginal neighbor counts ``(n_x, n_y)`` for every sample.

    With ``prepared=True`` the blocks are assumed to come from
    :func:`prepare_block` already and are used as they are.
    """
    if prepared:
        x = np.ascontiguousarray(x, dtype=float)
        y = np.ascontiguousarray(y, dtype=float)
    else:
        x = prepare_block(x)
        y = prepare_block(y)
    n = x.shape[0]
    if y.shape[0] != n:
        raise ValueError(f"sample blocks differ in length: {n} vs {y.shape[0]}")
    if k < 1 or n <= k:
        raise InsufficientSamplesError(f"KSG needs more samples than neighbors (n={n}, k={k})")
    if n <= BRUTE_FORCE_MAX:
        return _sweep_counts(x, y, int(k))
    return _tree_counts(x, y, int(k))


def ksg_mi(x, y, k: int = DEFAULT_K, prepared: bool = False) -> float:
    """Mutual information ``I(x; y)`` in nats.

    Parameters
    ----------
    x, y : array_like
        Aligned samples, shape ``(n,)`` or ``(n, d)``.
    k : int
        Number of joint-space neighbors.
    prepared : bool
        Skip tie breaking because the blocks went through
        :func:`prepare_block` already.
    """
    nx, ny = ksg_counts(x, y, k, prepared)
    n = nx.size
    hist = np.bincount(nx, minlength=n) + np.bincount(ny, minlength=n)
    table = _digamma_table(n + 1)
    # hist[m] samples have count m and contribute psi(m + 1)
    total = float(hist @ table[1:n + 1])
    return float(table[k] + table[n] - total / n)


def ksg_cmi(x, y, z=None, k: int = DEFAULT_K) -> float:
    """Conditional mutual information ``I(x; y | z) = I((x, z); y) - I(z; y)``."""
    if z is None:
        return ksg_mi(x, y, k)
    z = _as_block(z)
    if z.shape[1] == 0:
        return ksg_mi(x, y, k)
    xz = np.hstack([_as_block(x), z])
    return ksg_mi(xz, y, k) - ksg_mi(z, y, k)

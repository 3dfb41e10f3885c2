"""Nonlinear autoregressive benchmark generator with known lagged ground truth.

Every variable ``j`` evolves as a process-specific nonlinear function of
``Ybar_s[j]``, the average of its parents at one or more earlier steps, plus
noise.  Processes are numbered 1..19; number 17 is not available because it
diverges for most parameter draws.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np

from .core import TemporalGraph, TimeSeriesMatrix
from .errors import InsufficientHistoryError, UnstableProcessError

PROCESS_IDS = (1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16, 18, 19)
TRAIN_PROCESSES = (1, 3, 5, 7, 9, 11, 13, 15, 19)
TEST_PROCESSES = (2, 4, 6, 8, 10, 12, 14, 16, 18)
NOISE_KINDS = ("gaussian", "laplace", "uniform")
MAX_RETRIES = 100

# backshifts (relative to the current step t) entering each update rule
BACKSHIFTS = {
    1: (0, 1), 2: (1, 2), 3: (1, 2), 4: (0, 1), 5: (0,), 6: (0, 2),
    7: (1, 2), 8: (0, 2), 9: (0, 1), 10: (0,), 11: (0,), 12: (0, 1),
    13: (0, 1), 14: (0,), 15: (0,), 16: (0,), 18: (0,), 19: (1, 2),
}


def history_depth(process_id: int) -> int:
    """Rows of history one update needs (largest backshift plus one)."""
    _check_process(process_id)
    return max(BACKSHIFTS[process_id]) + 1


def process_lags(process_id: int) -> tuple:
    """Edge lags implied by a process: the row ``t + 1`` is produced from ``t - b``."""
    _check_process(process_id)
    return tuple(b + 1 for b in BACKSHIFTS[process_id])


def _check_process(process_id):
    if process_id not in BACKSHIFTS:
        raise ValueError(f"unknown process {process_id!r}; available: {PROCESS_IDS}")


@dataclass(frozen=True)
class GenConfig:
    process_id: int
    N: int = 5
    T: int = 250
    noise_kind: str = "gaussian"
    noise_scale: float = 1.0
    max_parents: int = 2
    seed: int = 0
    stability_threshold: float = 1e6
    force_self_parent: bool = True
    p14_noise: bool = True
    max_retries: int = MAX_RETRIES

    def __post_init__(self):
        _check_process(self.process_id)
        if self.noise_kind not in NOISE_KINDS:
            raise ValueError(f"noise_kind must be one of {NOISE_KINDS}, got {self.noise_kind!r}")
        if self.N < 1 or self.max_parents < 1 or self.max_retries < 1:
            raise ValueError("N, max_parents and max_retries must be >= 1")
        if not self.noise_scale >= 0:
            raise ValueError("noise_scale must be non-negative")
        if self.T <= history_depth(self.process_id):
            raise InsufficientHistoryError(
                f"T={self.T} leaves no generated rows for process {self.process_id}")


class GeneratedInstance(NamedTuple):
    series: TimeSeriesMatrix
    truth: TemporalGraph
    parent_sets: tuple
    config: GenConfig


def sample_parent_sets(N: int, max_parents: int, rng: np.random.Generator,
                       force_self: bool = True) -> tuple:
    """Draw one parent set per variable.

    The set size is uniform on ``[1, min(max_parents, N)]``, then members are
    drawn without replacement.  With ``force_self`` the variable itself always
    belongs to its own set.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    cap = min(max_parents, N)
    sets = []
    for j in range(N):
        size = int(rng.integers(1, cap + 1))
        if force_self:
            others = [p for p in range(N) if p != j]
            extra = rng.choice(others, size=size - 1, replace=False) if size > 1 else []
            members = {j, *map(int, extra)}
        else:
            members = set(map(int, rng.choice(N, size=size, replace=False)))
        sets.append(tuple(sorted(members)))
    return tuple(sets)


def _averaging_matrix(parent_sets, N):
    A = np.zeros((N, N))
    for j, ps in enumerate(parent_sets):
        A[j, list(ps)] = 1.0 / len(ps)
    return A


def _update(pid, yb, w, t, p14_noise):
    """One update; ``yb[b]`` holds parent means at backshift ``b``."""
    if pid == 1:
        y0, y1 = yb[0], yb[1] - 0.5
        return -0.4 * (3 - y0 ** 2) / (1 + y0 ** 2) + 0.6 * (3 - y1 ** 3) / (1 + y1 ** 4) + w
    if pid in (2, 7):
        y1, y2 = yb[1], yb[2]
        return ((0.4 - 2 * np.cos(40 * y2) * np.exp(-30 * y2 ** 2)) * y2
                + (0.5 - 0.5 * np.exp(-50 * y1 ** 2)) * y1 + w)
    if pid == 3:
        return 1.5 * np.sin(np.pi / 2 * yb[1]) - np.sin(np.pi / 2 * yb[2]) + w
    if pid == 4:
        y0, y1 = yb[0], yb[1]
        return 2 * np.exp(-0.1 * y0 ** 2) * y0 - np.exp(-0.1 * y1 ** 2) * y1 + w
    if pid == 5:
        # both indicator terms select the negative half-line as printed
        neg = (yb[0] < 0).astype(float)
        return -2 * yb[0] * neg + 0.4 * yb[0] * neg + w
    if pid == 6:
        return 0.8 * np.log(1 + 3 * yb[0] ** 2) - 0.6 * np.log(1 + 3 * yb[2] ** 2) + w
    if pid == 8:
        y0, y2 = yb[0], yb[2]
        return ((0.5 - 1.1 * np.exp(-50 * y0 ** 2)) * y0
                + (0.3 - 0.5 * np.exp(-50 * y2 ** 2)) * y2 + w)
    if pid in (9, 12):
        y0, y1 = yb[0], yb[1]
        return 0.3 * y0 + 0.6 * y1 + (0.1 - 0.9 * y0 + 0.8 * y1) / (1 + np.exp(-10 * y0)) + w
    if pid == 10:
        return np.sign(yb[0]) + w
    if pid == 11:
        y0 = yb[0]
        return 0.8 * y0 - 0.8 * y0 / (1 + np.exp(-10 * y0)) + w
    if pid == 13:
        return 0.38 * yb[0] * (1 - yb[1]) + w
    if pid == 14:
        y0 = yb[0]
        out = np.where(y0 < 1, -0.5 * y0, 0.4 * y0)
        return out + w if p14_noise else out
    if pid == 15:
        y0 = yb[0]
        return np.where(np.abs(y0) < 1, 0.9 * y0, -0.3 * y0) + w
    if pid == 16:
        regime = 1 if t % 2 == 0 else 0  # x_0 = 1, x_{t+1} = 1 - x_t
        return (-0.5 if regime == 1 else 0.4) * yb[0] + w
    if pid == 18:
        return 0.9 * yb[0] + w
    if pid == 19:
        return 0.4 * yb[1] + 0.6 * yb[2] + w
    raise ValueError(f"unknown process {pid!r}")


def step(process_id: int, history, parent_sets, noise_row, t: int = 0,
         p14_noise: bool = True) -> np.ndarray:
    """Next row from ``history`` (oldest first, last row is time ``t``).

    ``t`` only matters for process 16, whose regime alternates with time.
    """
    _check_process(process_id)
    history = np.atleast_2d(np.asarray(history, dtype=float))
    depth = history_depth(process_id)
    if history.shape[0] < depth:
        raise InsufficientHistoryError(
            f"process {process_id} needs {depth} rows of history, got {history.shape[0]}")
    N = history.shape[1]
    A = _averaging_matrix(parent_sets, N)
    yb = {b: A @ history[-1 - b] for b in BACKSHIFTS[process_id]}
    return np.asarray(_update(process_id, yb, np.asarray(noise_row, dtype=float), t, p14_noise), dtype=float)


def draw_noise(kind: str, size, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    """Zero-mean, unit-variance noise times ``scale``."""
    if kind == "gaussian":
        w = rng.standard_normal(size)
    elif kind == "laplace":
        w = rng.laplace(0.0, 1.0 / np.sqrt(2.0), size)
    elif kind == "uniform":
        w = rng.uniform(-np.sqrt(3.0), np.sqrt(3.0), size)
    else:
        raise ValueError(f"noise kind must be one of {NOISE_KINDS}, got {kind!r}")
    return scale * w


def simulate(process_id: int, parent_sets, initial, noise, p14_noise: bool = True) -> np.ndarray:
    """Run a process forward from explicit initial rows with a given noise grid.

    Parameters
    ----------
    initial : array_like, shape (d, N)
        Seed rows, ``d >= history_depth(process_id)``.
    noise : array_like, shape (T, N)
        Noise for every output row; rows covered by ``initial`` are ignored.
    """
    initial = np.atleast_2d(np.asarray(initial, dtype=float))
    noise = np.asarray(noise, dtype=float)
    depth = history_depth(process_id)
    d, N = initial.shape
    if d < depth:
        raise InsufficientHistoryError(f"process {process_id} needs {depth} initial rows, got {d}")
    T = noise.shape[0]
    A = _averaging_matrix(parent_sets, N)
    Y = np.empty((T, N))
    Y[:d] = initial[:T]
    shifts = BACKSHIFTS[process_id]
    with np.errstate(over="ignore", invalid="ignore"):
        for t in range(d - 1, T - 1):
            yb = {b: A @ Y[t - b] for b in shifts}
            Y[t + 1] = _update(process_id, yb, noise[t + 1], t, p14_noise)
    return Y


def build_truth(process_id: int, parent_sets) -> TemporalGraph:
    """One edge ``(parent, lag, child)`` per parent and per lag the rule uses."""
    lags = process_lags(process_id)
    edges = {(p, lag, j) for j, ps in enumerate(parent_sets) for p in ps for lag in lags}
    return TemporalGraph(len(parent_sets), frozenset(edges))


def _is_stable(Y, threshold):
    return bool(np.all(np.isfinite(Y)) and np.max(np.abs(Y)) < threshold)


def generate(config: GenConfig, index: int = 0) -> GeneratedInstance:
    """Draw parent sets, initial state and noise, then run the process.

    Each attempt uses its own stream derived from ``(seed, index, attempt)``,
    so instances are reproducible and independent of generation order.
    """
    depth = history_depth(config.process_id)
    for attempt in range(config.max_retries):
        rng = np.random.default_rng([config.seed, index, attempt])
        parents = sample_parent_sets(config.N, config.max_parents, rng, config.force_self_parent)
        initial = rng.uniform(-1.0, 1.0, size=(depth, config.N))
        noise = draw_noise(config.noise_kind, (config.T, config.N), rng, config.noise_scale)
        Y = simulate(config.process_id, parents, initial, noise, config.p14_noise)
        if _is_stable(Y, config.stability_threshold) and np.all(np.ptp(Y, axis=0) > 0):
            return GeneratedInstance(TimeSeriesMatrix(Y), build_truth(config.process_id, parents),
                                     parents, config)
    raise UnstableProcessError(
        f"process {config.process_id} stayed unstable after {config.max_retries} attempts (seed {config.seed})")


def generate_many(config: GenConfig, count: int, start: int = 0) -> list:
    return [generate(config, i) for i in range(start, start + count)]


def with_process(config: GenConfig, process_id: int, **changes) -> GenConfig:
    return replace(config, process_id=process_id, **changes)

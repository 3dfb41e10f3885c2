"""Shared data model: series container, lagged graphs and the lagged design matrix.

A lagged column is addressed by a ``(var, lag)`` pair meaning ``z_var`` at
time ``t - lag``.  Lags ``-1`` and ``L + 1`` do not exist as columns of the
flattened matrix; they are realized by shifting the nearest column by one
row, which is why sample extraction always goes through
:meth:`LaggedDataset.samples`.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .errors import DegenerateInputError, InvalidLagError, SchemaError

Node = tuple  # (var, lag); lag may be -1 or L + 1 for shift-realized neighbors


@dataclass(frozen=True)
class TimeSeriesMatrix:
    """A ``T x N`` grid of observations with one name per column."""

    values: np.ndarray
    var_names: tuple = ()

    def __post_init__(self):
        values = np.array(self.values, dtype=float, copy=True)
        if values.ndim == 1:
            values = values[:, None]
        if values.ndim != 2:
            raise SchemaError(f"expected a 2-D array, got shape {values.shape}")
        T, N = values.shape
        if T < 2 or N < 1:
            raise SchemaError(f"need T >= 2 and N >= 1, got T={T}, N={N}")
        if not np.all(np.isfinite(values)):
            raise DegenerateInputError("series contains non-finite values")
        values.setflags(write=False)
        names = tuple(self.var_names) if len(self.var_names) else tuple(f"z{v}" for v in range(N))
        if len(names) != N:
            raise SchemaError(f"{len(names)} names for {N} columns")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "var_names", names)

    @property
    def T(self) -> int:
        return self.values.shape[0]

    @property
    def N(self) -> int:
        return self.values.shape[1]

    def constant_columns(self) -> list:
        return [v for v in range(self.N) if np.ptp(self.values[:, v]) == 0.0]

    def require_nondegenerate(self):
        const = self.constant_columns()
        if const:
            names = ", ".join(self.var_names[v] for v in const)
            raise DegenerateInputError(f"constant column(s): {names}")


class CandidateLink(NamedTuple):
    """Candidate edge ``z_cause(t - lag) -> z_effect(t)``."""

    cause: int
    lag: int
    effect: int


@dataclass(frozen=True)
class TemporalGraph:
    n_vars: int
    edges: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        edges = frozenset(CandidateLink(*map(int, e)) for e in self.edges)
        for c, lag, e in edges:
            if lag < 1:
                raise InvalidLagError(f"edge ({c}, {lag}, {e}) has lag < 1")
            if not (0 <= c < self.n_vars and 0 <= e < self.n_vars):
                raise SchemaError(f"edge ({c}, {lag}, {e}) references a variable outside [0, {self.n_vars})")
        object.__setattr__(self, "edges", edges)

    def sorted_edges(self) -> list:
        """Edges in canonical (effect, cause, lag) order."""
        return sorted(self.edges, key=lambda e: (e.effect, e.cause, e.lag))

    def restricted(self, max_lag: int) -> "TemporalGraph":
        return TemporalGraph(self.n_vars, frozenset(e for e in self.edges if e.lag <= max_lag))

    def __contains__(self, link) -> bool:
        return CandidateLink(*link) in self.edges

    def __len__(self) -> int:
        return len(self.edges)

    def to_dict(self) -> dict:
        return {"n_vars": self.n_vars, "edges": [list(e) for e in self.sorted_edges()]}

    @classmethod
    def from_dict(cls, data: dict) -> "TemporalGraph":
        try:
            return cls(int(data["n_vars"]), frozenset(tuple(e) for e in data["edges"]))
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, SchemaError):
                raise
            raise SchemaError(f"malformed graph JSON: {exc}") from exc

    def dumps(self) -> str:
        return json.dumps(self.to_dict())

    def save(self, path):
        Path(path).write_text(self.dumps() + "\n")

    @classmethod
    def load(cls, path) -> "TemporalGraph":
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{path}: invalid JSON ({exc})") from exc
        return cls.from_dict(data)


class TemporalMB(NamedTuple):
    """Immediate temporal neighbors of a lagged column.

    ``parent`` is the same variable one step earlier, ``child`` one step
    later.  Either may sit outside ``[0, L]`` and is then realized by a
    one-row shift (see :meth:`LaggedDataset.samples`).
    """

    parent: Node
    child: Node

    @property
    def members(self) -> tuple:
        return (self.parent, self.child)


@dataclass(frozen=True)
class LaggedDataset:
    """Flattened ``(T - L) x (N * (L + 1))`` view of a series.

    Columns are ordered lag block first: all variables at lag 0, then all at
    lag 1, and so on.
    """

    source: TimeSeriesMatrix
    L: int
    matrix: np.ndarray = field(repr=False)

    @property
    def N(self) -> int:
        return self.source.N

    @property
    def n_rows(self) -> int:
        return self.matrix.shape[0]

    def column(self, var: int, lag: int) -> int:
        if not (0 <= var < self.N and 0 <= lag <= self.L):
            raise IndexError(f"no column for variable {var} at lag {lag} (N={self.N}, L={self.L})")
        return lag * self.N + var

    @property
    def col_index(self) -> dict:
        return {lag * self.N + v: (v, lag) for lag in range(self.L + 1) for v in range(self.N)}

    def row_range(self, nodes: Iterable[Node]) -> tuple:
        """Half-open row interval where every node has an observation."""
        lo, hi = 0, self.n_rows
        T = self.source.T
        for var, lag in nodes:
            if not 0 <= var < self.N or not -1 <= lag <= self.L + 1:
                raise IndexError(f"node ({var}, {lag}) cannot be realized (N={self.N}, L={self.L})")
            # row r of node (v, a) is source row r + L - a
            lo = max(lo, lag - self.L)
            hi = min(hi, T - self.L + lag)
        return lo, hi

    def samples(self, nodes: Sequence[Node], rows: tuple | None = None) -> np.ndarray:
        """Stack node columns over their common rows, shape ``(n, len(nodes))``."""
        if rows is None:
            rows = self.row_range(nodes)
        lo, hi = rows
        T = self.source.T
        src = self.source.values
        out = np.empty((hi - lo, len(nodes)))
        for c, (var, lag) in enumerate(nodes):
            start = lo + self.L - lag
            if start < 0 or start + (hi - lo) > T:
                raise IndexError(f"rows {rows} out of range for node ({var}, {lag})")
            out[:, c] = src[start:start + hi - lo, var]
        return out


def reshape_lagged(ts: TimeSeriesMatrix, L: int) -> LaggedDataset:
    """Build the lagged design matrix; cell ``(r, (v, a))`` is ``ts[r + L - a, v]``."""
    if not isinstance(L, (int, np.integer)) or L < 1 or L >= ts.T:
        raise InvalidLagError(f"max lag must satisfy 1 <= L < T (L={L}, T={ts.T})")
    L = int(L)
    T, N = ts.values.shape
    blocks = [ts.values[L - a:T - a] for a in range(L + 1)]
    matrix = np.hstack(blocks)
    matrix.setflags(write=False)
    return LaggedDataset(ts, L, matrix)


def enumerate_candidates(N: int, L: int, skip_self: bool = False) -> list:
    """All lagged links, effect-major then cause then lag ascending."""
    if N < 1 or L < 1:
        raise InvalidLagError(f"need N >= 1 and L >= 1 (N={N}, L={L})")
    return [
        CandidateLink(c, lag, e)
        for e in range(N)
        for c in range(N)
        if not (skip_self and c == e)
        for lag in range(1, L + 1)
    ]


def temporal_mb(ds: LaggedDataset, var: int, lag: int) -> TemporalMB:
    ds.column(var, lag)  # raises IndexError on unknown column
    return TemporalMB(parent=(var, lag + 1), child=(var, lag - 1))


def read_series_csv(path) -> TimeSeriesMatrix:
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise SchemaError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            try:
                rows.append([float(x) for x in row])
            except ValueError as exc:
                raise SchemaError(f"{path}:{lineno}: {exc}") from None
    if not rows:
        raise SchemaError(f"{path}: no data rows")
    return TimeSeriesMatrix(np.array(rows), tuple(h.strip() for h in header))


def write_series_csv(ts: TimeSeriesMatrix, path):
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(ts.var_names)
        for row in ts.values:
            writer.writerow([repr(float(x)) for x in row])

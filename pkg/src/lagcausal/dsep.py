"""Open-path counting on unrolled two-variable temporal DAGs.

Three small structural scenarios are unrolled over a time window and the
number of d-connecting simple paths is counted for the transfer-entropy
style query ``z_i(s) -> z_j(s + k) | z_j(s)`` and its mirror image.
"""
from __future__ import annotations

import sys
from dataclasses import dataclass
from typing import NamedTuple

WINDOW = (-10, 10)
# first time step used by the source of a query; leaves two steps of history
# before it so back-door routes through the past exist in every scenario
DEFAULT_SOURCE_TIME = -8

# published reference counts, k = 1..9, used only for side-by-side reporting
REFERENCE_COUNTS = {
    1: ([1, 2, 3, 4, 5, 6, 7, 8, 9], [0] * 9),
    2: ([370, 228, 324, 320, 374, 408, 469, 529, 615], [312, 153, 227, 183, 194, 176, 152, 125, 71]),
    3: ([1186, 880, 1138, 1123, 1187, 1209, 1234, 1245, 1271], [898, 502, 701, 580, 596, 534, 479, 403, 290]),
}


@dataclass(frozen=True)
class UnrolledDag:
    """Nodes are ``(variable, time)`` pairs, edges point forward in time."""

    nodes: tuple
    edges: frozenset

    def __post_init__(self):
        known = set(self.nodes)
        for a, b in self.edges:
            if a not in known or b not in known:
                raise ValueError(f"edge {a} -> {b} references an unknown node")
            if not a[1] < b[1]:
                raise ValueError(f"edge {a} -> {b} does not point forward in time")

    def parents(self) -> dict:
        out = {n: [] for n in self.nodes}
        for a, b in self.edges:
            out[b].append(a)
        return out

    def children(self) -> dict:
        out = {n: [] for n in self.nodes}
        for a, b in self.edges:
            out[a].append(b)
        return out


class PathQuery(NamedTuple):
    src: tuple
    dst: tuple
    conditioning: frozenset = frozenset()


class AsymmetryRow(NamedTuple):
    k: int
    forward: int
    backward: int
    delta: int


def build_scenario(scenario: int, window: tuple = WINDOW) -> UnrolledDag:
    """Unroll one of the three reference structures over ``window`` (inclusive).

    1. ``z_i -> z_i``, ``z_j -> z_j`` and ``z_i -> z_j``, all at lag 1.
    2. Scenario 1 plus lag-2 self influences on both variables.
    3. Scenario 1 plus a confounder chain ``L`` driving both variables.
    """
    if scenario not in (1, 2, 3):
        raise ValueError(f"unknown scenario {scenario!r}; expected 1, 2 or 3")
    lo, hi = window
    if lo > hi:
        raise ValueError(f"empty window {window}")
    names = ("i", "j", "L") if scenario == 3 else ("i", "j")
    nodes = tuple((v, s) for v in names for s in range(lo, hi + 1))
    edges = set()

    def add(a, b):
        if lo <= a[1] and b[1] <= hi:
            edges.add((a, b))

    for s in range(lo, hi + 1):
        add(("i", s), ("i", s + 1))
        add(("j", s), ("j", s + 1))
        add(("i", s), ("j", s + 1))
        if scenario == 2:
            add(("i", s), ("i", s + 2))
            add(("j", s), ("j", s + 2))
        elif scenario == 3:
            add(("L", s), ("L", s + 1))
            add(("L", s), ("i", s + 1))
            add(("L", s), ("j", s + 1))
    return UnrolledDag(nodes, frozenset(edges))


def _ancestors_of(dag: UnrolledDag, targets) -> set:
    """``targets`` and everything with a directed path into them."""
    par = dag.parents()
    seen = set()
    stack = list(targets)
    while stack:
        n = stack.pop()
        if n in seen:
            continue
        seen.add(n)
        stack.extend(par[n])
    return seen


def count_open_paths(dag: UnrolledDag, query: PathQuery) -> int:
    """Number of simple undirected paths from ``src`` to ``dst`` open given Z.

    A non-collider blocks when it is conditioned on; a collider blocks unless
    it or one of its descendants is conditioned on.
    """
    src, dst = query.src, query.dst
    Z = frozenset(query.conditioning)
    known = set(dag.nodes)
    for n in (src, dst, *Z):
        if n not in known:
            raise ValueError(f"node {n} is not part of the DAG")
    if src == dst:
        raise ValueError("source and target must differ")
    if src in Z or dst in Z:
        raise ValueError("conditioning set must exclude source and target")

    index = {n: c for c, n in enumerate(dag.nodes)}
    has_z_desc = [False] * len(dag.nodes)
    for n in _ancestors_of(dag, Z):
        has_z_desc[index[n]] = True
    in_z = [n in Z for n in dag.nodes]
    # neighbor lists of (node, arrow_points_into_neighbor)
    nbrs = [[] for _ in dag.nodes]
    for a, b in dag.edges:
        nbrs[index[a]].append((index[b], True))
        nbrs[index[b]].append((index[a], False))
    s, t = index[src], index[dst]
    visited = [False] * len(dag.nodes)
    visited[s] = True

    def walk(cur, arrived_into):
        total = 0
        for nxt, into_next in nbrs[cur]:
            if visited[nxt]:
                continue
            if cur != s:
                # cur is a collider when both path edges point into it
                if arrived_into and not into_next:
                    if not has_z_desc[cur]:
                        continue
                elif in_z[cur]:
                    continue
            if nxt == t:
                total += 1
                continue
            visited[nxt] = True
            total += walk(nxt, into_next)
            visited[nxt] = False
        return total

    limit = sys.getrecursionlimit()
    sys.setrecursionlimit(max(limit, 4 * len(dag.nodes) + 100))
    try:
        return walk(s, False)
    finally:
        sys.setrecursionlimit(limit)


def forward_query(k: int, source_time: int = DEFAULT_SOURCE_TIME) -> PathQuery:
    """``z_i(s) ; z_j(s + k) | z_j(s)``."""
    return PathQuery(("i", source_time), ("j", source_time + k), frozenset({("j", source_time)}))


def backward_query(k: int, source_time: int = DEFAULT_SOURCE_TIME) -> PathQuery:
    """``z_j(s) ; z_i(s + k) | z_i(s)``."""
    return PathQuery(("j", source_time), ("i", source_time + k), frozenset({("i", source_time)}))


def asymmetry_table(scenario: int, kmax: int = 9, window: tuple = WINDOW,
                    source_time: int = DEFAULT_SOURCE_TIME, anchor: str = "source") -> list:
    """Forward and backward open-path counts for ``k = 1..kmax``.

    With ``anchor="source"`` the query source sits at ``source_time`` and the
    target ``k`` steps later.  With ``anchor="target"`` the target is pinned
    at time 0 and the source moves back to ``-k``; counts then grow very fast
    with the amount of past available and enumeration is slow.
    """
    if anchor not in ("source", "target"):
        raise ValueError(f"anchor must be 'source' or 'target', got {anchor!r}")
    dag = build_scenario(scenario, window)
    rows = []
    for k in range(1, kmax + 1):
        s = source_time if anchor == "source" else -k
        if s < window[0] or s + k > window[1]:
            raise ValueError(f"k={k} does not fit the window {window} from source time {s}")
        fwd = count_open_paths(dag, forward_query(k, s))
        bwd = count_open_paths(dag, backward_query(k, s))
        rows.append(AsymmetryRow(k, fwd, bwd, fwd - bwd))
    return rows


def table_csv_rows(scenario: int, rows: list) -> list:
    """Table layout: one line per direction, columns ``k = 1..kmax``.

    Reference lines are appended when published counts exist, so any
    mismatch is visible next to the computed values.
    """
    ks = [r.k for r in rows]
    out = [["direction"] + [str(k) for k in ks]]
    out.append(["forward"] + [str(r.forward) for r in rows])
    out.append(["backward"] + [str(r.backward) for r in rows])
    out.append(["delta"] + [str(r.delta) for r in rows])
    ref = REFERENCE_COUNTS.get(scenario)
    if ref is not None and ks and max(ks) <= len(ref[0]):
        f = [ref[0][k - 1] for k in ks]
        b = [ref[1][k - 1] for k in ks]
        out.append(["reference_forward"] + [str(x) for x in f])
        out.append(["reference_backward"] + [str(x) for x in b])
        out.append(["reference_delta"] + [str(x - y) for x, y in zip(f, b)])
        out.append(["matches_reference"] + [str(r.forward == x and r.backward == y).lower()
                                            for r, x, y in zip(rows, f, b)])
    return out

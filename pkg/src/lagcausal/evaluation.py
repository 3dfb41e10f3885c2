"""Scoring against ground truth, linear baselines and multi-run comparisons.

Baselines are fit by ordinary least squares on the stacked lag design
``[1, z(t-1), ..., z(t-L)]`` over rows ``t = L..T-1``.
"""
from __future__ import annotations

import itertools
import logging
from typing import NamedTuple

import numpy as np
from scipy import stats

from .core import CandidateLink, TemporalGraph, TimeSeriesMatrix, enumerate_candidates
from .errors import ConsistencyError, InsufficientSamplesError, InvalidLagError, ShapeError

log = logging.getLogger(__name__)


class ConfusionCounts(NamedTuple):
    TP: int
    FP: int
    TN: int
    FN: int

    @property
    def total(self) -> int:
        return self.TP + self.FP + self.TN + self.FN


class MetricSet(NamedTuple):
    precision: float
    recall: float
    f1: float
    accuracy: float
    balanced_accuracy: float


def _ratio(a, b) -> float:
    return a / b if b else 0.0


def confusion(predicted: TemporalGraph, truth: TemporalGraph, universe=None) -> ConfusionCounts:
    """Counts over the candidate universe; edges match on the full triple."""
    if universe is None:
        L = max([e.lag for e in truth.edges | predicted.edges] or [1])
        universe = enumerate_candidates(truth.n_vars, L)
    uni = set(CandidateLink(*u) for u in universe)
    for name, g in (("predicted", predicted), ("truth", truth)):
        extra = g.edges - uni
        if extra:
            raise ConsistencyError(f"{name} edge {min(extra)} lies outside the candidate universe")
    tp = len(predicted.edges & truth.edges)
    fp = len(predicted.edges - truth.edges)
    fn = len(truth.edges - predicted.edges)
    return ConfusionCounts(tp, fp, len(uni) - tp - fp - fn, fn)


def metrics(c: ConfusionCounts) -> MetricSet:
    """Precision, recall, F1, accuracy and balanced accuracy; 0/0 gives 0."""
    TP, FP, TN, FN = c
    if min(c) < 0:
        raise ValueError(f"negative count in {c}")
    precision = _ratio(TP, TP + FP)
    recall = _ratio(TP, TP + FN)
    f1 = _ratio(2 * precision * recall, precision + recall)
    accuracy = _ratio(TP + TN, TP + TN + FP + FN)
    specificity = _ratio(TN, TN + FP)
    balanced = 0.5 * (recall + specificity)
    return MetricSet(precision, recall, f1, accuracy, balanced)


def rates(c: ConfusionCounts) -> tuple:
    """``(TPR, FPR)`` with 0/0 read as 0."""
    return _ratio(c.TP, c.TP + c.FN), _ratio(c.FP, c.FP + c.TN)


# -- linear baselines ---------------------------------------------------------------

def _lag_design(values: np.ndarray, L: int):
    T, N = values.shape
    if not 1 <= L < T:
        raise InvalidLagError(f"max lag must satisfy 1 <= L < T (L={L}, T={T})")
    n = T - L
    if n <= N * L + 1:
        raise InsufficientSamplesError(f"{n} rows cannot fit a VAR({L}) with {N} variables")
    # column 1 + (lag - 1) * N + var holds z_var(t - lag)
    X = np.hstack([np.ones((n, 1))] + [values[L - lag:T - lag] for lag in range(1, L + 1)])
    Y = values[L:]
    return X, Y


def _ols(X, y):
    """Coefficients, residual sum of squares and coefficient covariance factor."""
    XtX = X.T @ X
    p = X.shape[1]
    if np.linalg.matrix_rank(X) < p:
        log.warning("singular design matrix; using a small ridge penalty")
        XtX = XtX + 1e-8 * np.trace(XtX) / p * np.eye(p)
    inv = np.linalg.inv(XtX)
    beta = inv @ (X.T @ y)
    resid = y - X @ beta
    return beta, float(resid @ resid), inv


def baseline_var(ts: TimeSeriesMatrix, L: int, alpha: float = 0.05, coef_min: float = 0.1) -> TemporalGraph:
    """Edges whose VAR(L) coefficient is significant (t-test) and larger than ``coef_min``."""
    X, Y = _lag_design(ts.values, L)
    n, p = X.shape
    N = ts.N
    edges = set()
    for j in range(N):
        beta, rss, inv = _ols(X, Y[:, j])
        sigma2 = rss / (n - p)
        se = np.sqrt(np.maximum(sigma2 * np.diag(inv), 0.0))
        with np.errstate(divide="ignore", invalid="ignore"):
            tstat = np.where(se > 0, beta / se, np.inf)
        pvals = 2 * stats.t.sf(np.abs(tstat), n - p)
        for lag in range(1, L + 1):
            for i in range(N):
                c = 1 + (lag - 1) * N + i
                if pvals[c] < alpha and abs(beta[c]) > coef_min:
                    edges.add((i, lag, j))
    return TemporalGraph(N, frozenset(edges))


def _f_pvalue(rss_r, rss_u, df1, df2) -> float:
    if rss_u <= 0:
        return 0.0 if rss_r > rss_u else 1.0
    F = ((rss_r - rss_u) / df1) / (rss_u / df2)
    return float(stats.f.sf(F, df1, df2))


def pairwise_granger_pvalues(ts: TimeSeriesMatrix, L: int) -> dict:
    """F-test p-value per ordered pair ``(i, j)``, ``i != j``."""
    T, N = ts.values.shape
    out = {}
    for i, j in itertools.permutations(range(N), 2):
        sub = ts.values[:, [j, i]]
        X, Y = _lag_design(sub, L)
        own = [0] + [1 + (lag - 1) * 2 for lag in range(1, L + 1)]
        y = Y[:, 0]
        _, rss_r, _ = _ols(X[:, own], y)
        _, rss_u, _ = _ols(X, y)
        out[i, j] = _f_pvalue(rss_r, rss_u, L, X.shape[0] - X.shape[1])
    return out


def baseline_pairwise_granger(ts: TimeSeriesMatrix, L: int, alpha: float = 0.05,
                              lag1_only: bool = False) -> TemporalGraph:
    """Bivariate Granger test per ordered pair.

    The test does not resolve lags, so a rejection yields edges at every lag
    ``1..L`` (or only lag 1 with ``lag1_only``).  Self pairs are not tested.
    """
    lags = (1,) if lag1_only else tuple(range(1, L + 1))
    edges = {(i, lag, j) for (i, j), p in pairwise_granger_pvalues(ts, L).items() if p < alpha for lag in lags}
    return TemporalGraph(ts.N, frozenset(edges))


def mvgc_pvalues(ts: TimeSeriesMatrix, L: int) -> dict:
    """Joint F-test that all ``L`` lags of ``z_i`` vanish in the full equation of ``z_j``."""
    X, Y = _lag_design(ts.values, L)
    n, p = X.shape
    N = ts.N
    out = {}
    for j in range(N):
        _, rss_u, _ = _ols(X, Y[:, j])
        for i in range(N):
            drop = {1 + (lag - 1) * N + i for lag in range(1, L + 1)}
            keep = [c for c in range(p) if c not in drop]
            _, rss_r, _ = _ols(X[:, keep], Y[:, j])
            out[i, j] = _f_pvalue(rss_r, rss_u, L, n - p)
    return out


def baseline_mvgc(ts: TimeSeriesMatrix, L: int, alpha: float = 0.05, lag1_only: bool = False) -> TemporalGraph:
    """Multivariate (conditional) Granger test, one decision per ordered pair."""
    lags = (1,) if lag1_only else tuple(range(1, L + 1))
    edges = {(i, lag, j) for (i, j), p in mvgc_pvalues(ts, L).items() if p < alpha for lag in lags}
    return TemporalGraph(ts.N, frozenset(edges))


BASELINES = {"var": baseline_var, "granger": baseline_pairwise_granger, "mvgc": baseline_mvgc}


# -- comparison statistics --------------------------------------------------------

class RankTable(NamedTuple):
    scores: np.ndarray  # methods x runs, larger is better
    ranks: np.ndarray


def rank_table(scores) -> RankTable:
    """Rank methods within every run, 1 = best, ties get their average rank."""
    S = np.asarray(scores, dtype=float)
    if S.ndim != 2 or S.shape[0] < 2 or S.shape[1] < 1:
        raise ShapeError(f"scores must be methods x runs with at least 2 methods, got {S.shape}")
    R = np.column_stack([stats.rankdata(-S[:, r], method="average") for r in range(S.shape[1])])
    return RankTable(S, R)


def friedman(table) -> tuple:
    """Friedman chi-square statistic on run-wise ranks and its p-value."""
    if not isinstance(table, RankTable):
        table = rank_table(table)
    m, n = table.ranks.shape
    if m < 2 or n < 2:
        raise ShapeError(f"Friedman needs >= 2 methods and >= 2 runs, got {m} x {n}")
    R = table.ranks.mean(axis=1)
    stat = 12.0 * n / (m * (m + 1)) * (float(np.sum(R ** 2)) - m * (m + 1) ** 2 / 4.0)
    if abs(stat) < 1e-12:  # rounding residue when all mean ranks tie
        stat = 0.0
    return stat, float(stats.chi2.sf(stat, m - 1))


def signed_rank_p(x, y) -> float:
    """Two-sided Wilcoxon signed-rank p-value, zero differences dropped."""
    d = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    if not np.any(d != 0):
        return 1.0
    return float(stats.wilcoxon(d, zero_method="wilcox").pvalue)


def holm(pvalues) -> np.ndarray:
    """Holm step-down adjusted p-values, in the input order."""
    p = np.asarray(pvalues, dtype=float)
    m = p.size
    order = np.argsort(p, kind="mergesort")
    adj = np.empty(m)
    running = 0.0
    for rank, idx in enumerate(order):
        running = max(running, min(1.0, (m - rank) * p[idx]))
        adj[idx] = running
    return adj


def wilcoxon_holm(scores) -> np.ndarray:
    """Symmetric matrix of Holm-adjusted pairwise signed-rank p-values (diagonal 1)."""
    S = np.asarray(scores, dtype=float)
    m = S.shape[0]
    pairs = list(itertools.combinations(range(m), 2))
    raw = [signed_rank_p(S[a], S[b]) for a, b in pairs]
    adj = holm(raw) if pairs else np.array([])
    P = np.ones((m, m))
    for (a, b), v in zip(pairs, adj):
        P[a, b] = P[b, a] = v
    return P


def average_ranks(scores, names=None, alpha: float = 0.05) -> dict:
    """Mean ranks and the data needed to draw a critical-difference diagram.

    ``cliques`` lists maximal runs of methods (in rank order) whose pairwise
    adjusted p-values are all ``>= alpha``.
    """
    table = rank_table(scores)
    m, n = table.ranks.shape
    names = list(names) if names is not None else [f"method{c}" for c in range(m)]
    mean = table.ranks.mean(axis=1)
    P = wilcoxon_holm(table.scores)
    stat, pval = friedman(table) if n >= 2 else (float("nan"), float("nan"))
    order = sorted(range(m), key=lambda c: (mean[c], c))
    cliques = []
    for a in range(m):
        b = a
        while b + 1 < m and all(P[order[x], order[b + 1]] >= alpha for x in range(a, b + 1)):
            b += 1
        if b > a:
            group = [names[order[x]] for x in range(a, b + 1)]
            if not any(set(group) <= set(g) for g in cliques):
                cliques.append(group)
    return {
        "methods": names,
        "mean_ranks": {names[c]: float(mean[c]) for c in range(m)},
        "order": [names[c] for c in order],
        "n_runs": int(n),
        "friedman": {"statistic": float(stat), "p_value": float(pval)},
        "alpha": alpha,
        "pairwise_p_holm": {f"{names[a]}|{names[b]}": float(P[a, b]) for a, b in itertools.combinations(range(m), 2)},
        "significant": [[names[a], names[b]] for a, b in itertools.combinations(range(m), 2) if P[a, b] < alpha],
        "cliques": cliques,
    }

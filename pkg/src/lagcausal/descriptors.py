"""Descriptor vector for a candidate lagged link ``z_i(t - tau) -> z_j(t)``.

Naming follows the cause/effect convention of the feature catalog: ``C`` is
the cause column ``(i, tau)``, ``E`` the effect column ``(j, 0)``.  Each has
a temporal blanket of two members, its parent one step earlier and its child
one step later.  The child of the effect and the parent of a lag-``L`` cause
fall outside the lagged matrix and are realized by a one-row shift, so every
link uses the common rows of its six columns.

All columns are standardized over those rows before any estimate.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import mi
from .core import CandidateLink, LaggedDataset, TimeSeriesMatrix, reshape_lagged
from .errors import InvalidLagError

FEATURE_NAMES = (
    "parcorr_errors", "errors_correlation_with_inputs", "coeff_cause", "coeff_eff",
    "HOC_3_1", "HOC_1_2", "HOC_2_1", "HOC_1_3",
    "kurtosis_ca", "kurtosis_ef", "skewness_ca", "skewness_ef",
    "te_asymmetry_diff_1_15", "transfer_entropy_fwd", "transfer_entropy_bwd", "transfer_entropy_diff",
    "com_cau", "cau_eff", "eff_cau", "eff_cau_mbeff", "cau_eff_mbcau",
    "mca_mef_cau_parent", "mca_mef_cau_child", "mca_mef_cau_mean", "mca_mef_cau_std",
    "mca_mef_eff_parent", "mca_mef_eff_child", "mca_mef_eff_mean", "mca_mef_eff_std",
    "cau_m_eff_interaction", "cau_m_eff_mean", "cau_m_eff_std",
    "eff_m_cau_parent", "eff_m_cau_child", "eff_m_cau_mean", "eff_m_cau_std",
    "m_cau_interaction", "m_cau_mean", "m_cau_std",
    "eff_cau_mbcau_plus_interaction", "eff_cau_mbcau_plus_mean", "eff_cau_mbcau_plus_std",
    "cau_eff_mbeff_plus_parent", "cau_eff_mbeff_plus_child", "cau_eff_mbeff_plus_mean",
    "cau_eff_mbeff_plus_std",
    "m_eff_parent", "m_eff_child", "m_eff_mean", "m_eff_std",
    "mca_mca_cau_parent", "mca_mca_cau_child", "mca_mca_cau_mean", "mca_mca_cau_std",
    "mbe_mbe_eff_interaction", "mbe_mbe_eff_mean", "mbe_mbe_eff_std",
    "mca_mef_cau_interaction", "mca_mef_eff_interaction", "eff_m_cau_interaction",
    "cau_eff_mbeff_plus_interaction", "m_eff_interaction", "mca_mca_cau_interaction",
)
N_FEATURES = len(FEATURE_NAMES)
HOC_ORDERS = ((3, 1), (1, 2), (2, 1), (1, 3))


@dataclass(frozen=True)
class TEConfig:
    k_min: int = 1
    k_max: int = 15
    min_rows: int = 30

    def __post_init__(self):
        if not 1 <= self.k_min <= self.k_max:
            raise InvalidLagError(f"need 1 <= k_min <= k_max, got {self.k_min}, {self.k_max}")


@dataclass(frozen=True)
class DescriptorConfig:
    te: TEConfig = field(default_factory=TEConfig)
    k_neighbors: int = mi.DEFAULT_K
    ridge_lambda: float = 1.0

    def to_dict(self) -> dict:
        return {"te_k_min": self.te.k_min, "te_k_max": self.te.k_max, "te_min_rows": self.te.min_rows,
                "k_neighbors": self.k_neighbors, "ridge_lambda": self.ridge_lambda}

    @classmethod
    def from_dict(cls, d: dict) -> "DescriptorConfig":
        te = TEConfig(int(d["te_k_min"]), int(d["te_k_max"]), int(d["te_min_rows"]))
        return cls(te, int(d["k_neighbors"]), float(d["ridge_lambda"]))


@dataclass(frozen=True)
class DescriptorVector:
    link: CandidateLink
    values: np.ndarray
    flags: tuple = ()

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != (N_FEATURES,):
            raise ValueError(f"expected {N_FEATURES} values, got shape {values.shape}")
        object.__setattr__(self, "link", CandidateLink(*self.link))
        object.__setattr__(self, "values", values)

    def as_dict(self) -> dict:
        return dict(zip(FEATURE_NAMES, self.values.tolist()))

    def __getitem__(self, name: str) -> float:
        return float(self.values[FEATURE_NAMES.index(name)])


def standardize(x: np.ndarray) -> np.ndarray:
    """Zero mean, unit (population) variance; a constant input maps to zeros."""
    x = np.asarray(x, dtype=float)
    sd = x.std()
    if sd == 0.0:
        return np.zeros_like(x)
    return (x - x.mean()) / sd


def ridge_fit(y: np.ndarray, X: np.ndarray, lam: float = 1.0):
    """Ridge regression with standardized predictors and an unpenalized intercept.

    Returns
    -------
    coef : ndarray
        Coefficients on the original predictor scale.
    resid : ndarray
        In-sample residuals.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=float)
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    live = sd > 0
    Xs = np.zeros_like(X)
    Xs[:, live] = (X[:, live] - mu[live]) / sd[live]
    yc = y - y.mean()
    p = X.shape[1]
    b = np.linalg.solve(Xs.T @ Xs + lam * np.eye(p), Xs.T @ yc)
    resid = yc - Xs @ b
    coef = np.zeros(p)
    coef[live] = b[live] / sd[live]
    return coef, resid


def _corr(a: np.ndarray, b: np.ndarray) -> float | None:
    sa, sb = a.std(), b.std()
    if sa == 0.0 or sb == 0.0:
        return None
    return float(np.mean((a - a.mean()) * (b - b.mean())) / (sa * sb))


def hoc_moments(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """``HOC_31, HOC_12, HOC_21, HOC_13, kurt(x), kurt(y), skew(x), skew(y)``.

    Kurtosis is the plain (non-excess) fourth standardized moment.
    """
    xs, ys = standardize(x), standardize(y)
    cross = [np.mean(xs ** a * ys ** b) for a, b in HOC_ORDERS]
    return np.array(cross + [np.mean(xs ** 4), np.mean(ys ** 4), np.mean(xs ** 3), np.mean(ys ** 3)])


def _mean_std(vals) -> tuple:
    v = np.asarray(vals, dtype=float)
    return float(v.mean()), float(v.std())


class SeriesFeaturizer:
    """Descriptor computations for all links of one series, with shared caches.

    Mutual-information terms recur across links (blanket-only terms of a
    cause column are shared by every effect, and so on).  Estimates are
    cached under the source rows their columns cover, so two links reusing
    the same samples reuse the same number.
    """

    def __init__(self, ds: LaggedDataset, cfg: DescriptorConfig | None = None):
        self.ds = ds
        self.cfg = cfg or DescriptorConfig()
        self._columns = {}
        self._mi = {}
        self._te = {}

    @classmethod
    def from_series(cls, ts: TimeSeriesMatrix, L: int, cfg: DescriptorConfig | None = None):
        ts.require_nondegenerate()
        return cls(reshape_lagged(ts, L), cfg)

    # -- sample access -------------------------------------------------

    @staticmethod
    def roles(link: CandidateLink) -> dict:
        i, tau, j = link
        return {"C": (i, tau), "Cp": (i, tau + 1), "Cc": (i, tau - 1),
                "E": (j, 0), "Ep": (j, 1), "Ec": (j, -1)}

    def link_rows(self, link: CandidateLink) -> tuple:
        i, tau, j = link
        if not (0 <= i < self.ds.N and 0 <= j < self.ds.N and 1 <= tau <= self.ds.L):
            raise InvalidLagError(f"link {tuple(link)} is not a candidate for N={self.ds.N}, L={self.ds.L}")
        return self.ds.row_range(self.roles(link).values())

    def _key(self, node, rows):
        var, lag = node
        return (var, rows[0] + self.ds.L - lag)

    def _column(self, key, n):
        ck = (key, n)
        col = self._columns.get(ck)
        if col is None:
            var, start = key
            raw = self.ds.source.values[start:start + n, var]
            col = mi.prepare_block(standardize(raw))[:, 0]
            self._columns[ck] = col
        return col

    def raw(self, node, rows) -> np.ndarray:
        var, start = self._key(node, rows)
        return self.ds.source.values[start:start + rows[1] - rows[0], var]

    def std(self, node, rows) -> np.ndarray:
        return self._column(self._key(node, rows), rows[1] - rows[0])

    # -- information terms ----------------------------------------------

    def mi(self, xs, ys, rows) -> float:
        """``I(X; Y)`` for node sets over ``rows``; duplicate nodes collapse."""
        kx = tuple(sorted({self._key(nd, rows) for nd in xs}))
        ky = tuple(sorted({self._key(nd, rows) for nd in ys}))
        n = rows[1] - rows[0]
        key = (min(kx, ky), max(kx, ky), n)
        val = self._mi.get(key)
        if val is None:
            bx = np.column_stack([self._column(c, n) for c in key[0]])
            by = np.column_stack([self._column(c, n) for c in key[1]])
            val = mi.ksg_mi(bx, by, self.cfg.k_neighbors, prepared=True)
            self._mi[key] = val
        return val

    def cmi(self, xs, ys, zs, rows) -> float:
        """``I(X; Y | Z) = I((X, Z); Y) - I(Z; Y)``; empty ``Z`` gives ``I(X; Y)``."""
        zs = tuple(zs)
        if not zs:
            return self.mi(xs, ys, rows)
        return self.mi(tuple(xs) + zs, ys, rows) - self.mi(zs, ys, rows)

    # -- transfer entropy family ------------------------------------------

    def te_profile(self, i: int, j: int):
        """``I(z_i[t-1]; z_j[t] | z_j[t-k])`` for every feasible ``k``.

        Returns the conditioning lags that had at least ``min_rows`` samples
        and the matching estimates.
        """
        key = (i, j)
        hit = self._te.get(key)
        if hit is not None:
            return hit
        te = self.cfg.te
        z = self.ds.source.values
        T = z.shape[0]
        ks, vals = [], []
        for k in range(te.k_min, te.k_max + 1):
            t0 = max(k, 1)
            n = T - t0
            if n < te.min_rows:
                continue
            x = mi.prepare_block(standardize(z[t0 - 1:T - 1, i]))
            y = mi.prepare_block(standardize(z[t0:T, j]))
            c = mi.prepare_block(standardize(z[t0 - k:T - k, j]))
            kn = self.cfg.k_neighbors
            v = (mi.ksg_mi(np.hstack([x, c]), y, kn, prepared=True)
                 - mi.ksg_mi(c, y, kn, prepared=True))
            ks.append(k)
            vals.append(v)
        out = (tuple(ks), np.array(vals))
        self._te[key] = out
        return out

    def te_family(self, link: CandidateLink) -> tuple:
        """``(te_asymmetry_diff_1_15, te_fwd, te_bwd, te_diff)`` and flags."""
        i, _, j = link
        ks_f, fwd = self.te_profile(i, j)
        ks_b, bwd = self.te_profile(j, i)
        flags = []
        te = self.cfg.te
        if ks_f and ks_f != tuple(range(te.k_min, te.k_max + 1)):
            flags.append(f"te_lags:{ks_f[0]}-{ks_f[-1]}")
        asy = float(np.mean(fwd - bwd)) if ks_f else 0.0
        if not ks_f:
            flags.append("te_lags:none")
        if 1 in ks_f:
            f1 = float(fwd[ks_f.index(1)])
            b1 = float(bwd[ks_b.index(1)])
        else:
            f1 = b1 = 0.0
            flags.append("te_k1:missing")
        return (asy, f1, b1, f1 - b1), flags

    # -- regression and moment families -------------------------------------

    def error_based(self, link: CandidateLink, rows=None) -> tuple:
        rows = rows or self.link_rows(link)
        r = self.roles(link)
        lam = self.cfg.ridge_lambda
        flags = []
        C, E = self.std(r["C"], rows), self.std(r["E"], rows)
        mb_c = [self.std(r[m], rows) for m in ("Cp", "Cc")]
        mb_e = [self.std(r[m], rows) for m in ("Ep", "Ec")]
        S = np.column_stack(mb_c + mb_e)
        _, ei = ridge_fit(C, S, lam)
        _, ej = ridge_fit(E, S, lam)
        pc = _corr(ei, ej)
        if pc is None:
            flags.append("zero_variance_residual:parcorr_errors")
            pc = 0.0
        _, res = ridge_fit(E, np.column_stack([C] + mb_c), lam)
        rc = _corr(res, C)
        if rc is None:
            flags.append("zero_variance_residual:errors_correlation_with_inputs")
            rc = 0.0
        return (pc, rc), flags

    def linear_coeffs(self, link: CandidateLink, rows=None) -> tuple:
        """Raw-scale coefficient of the other endpoint, with the blanket as covariates."""
        rows = rows or self.link_rows(link)
        r = self.roles(link)
        lam = self.cfg.ridge_lambda
        C, E = self.raw(r["C"], rows), self.raw(r["E"], rows)
        Xc = np.column_stack([C, self.raw(r["Ep"], rows), self.raw(r["Ec"], rows)])
        Xe = np.column_stack([E, self.raw(r["Cp"], rows), self.raw(r["Cc"], rows)])
        b_cause = ridge_fit(E, Xc, lam)[0][0]
        b_eff = ridge_fit(C, Xe, lam)[0][0]
        return float(b_cause), float(b_eff)

    def hoc_family(self, link: CandidateLink, rows=None) -> np.ndarray:
        rows = rows or self.link_rows(link)
        r = self.roles(link)
        return hoc_moments(self.raw(r["C"], rows), self.raw(r["E"], rows))

    # -- blanket information descriptors ------------------------------------

    def legacy(self, link: CandidateLink, rows=None) -> list:
        rows = rows or self.link_rows(link)
        r = self.roles(link)
        C, Cp, Cc, E, Ep, Ec = (r[m] for m in ("C", "Cp", "Cc", "E", "Ep", "Ec"))
        mb_c, mb_e = (Cp, Cc), (Ep, Ec)

        def I(x, y, z=()):
            return self.cmi((x,) if isinstance(x[0], int) else x,
                            (y,) if isinstance(y[0], int) else y, z, rows)

        common = tuple(n for n in mb_c if n in mb_e)
        com_cau = I(C, E, common)
        cau_eff = I(C, E)
        eff_cau = I(E, C)
        eff_cau_mbeff = I(E, C, mb_e)
        cau_eff_mbcau = I(C, E, mb_c)

        mme_c = {(a, b): I(a, b, (C,)) for a in mb_c for b in mb_e}
        mme_e = {(a, b): I(a, b, (E,)) for a in mb_c for b in mb_e}
        cme = [I(C, m, (E,)) for m in mb_e]
        emc = [I(E, m, (C,)) for m in mb_c]
        mc = [I(C, m) for m in mb_e]
        ecp = [I(E, C, _dedup(mb_c + (m,))) for m in mb_e]
        cep = [I(C, E, _dedup(mb_e + (m,))) for m in mb_c]
        me = [I(E, m) for m in mb_c]
        # information interaction of the blanket pair, both orderings
        mmc = [I(Cp, Cc) - I(Cp, Cc, (C,)), I(Cc, Cp) - I(Cc, Cp, (C,))]
        mmd = [I(Ep, Ec) - I(Ep, Ec, (E,)), I(Ec, Ep) - I(Ec, Ep, (E,))]

        out = [com_cau, cau_eff, eff_cau, eff_cau_mbeff, cau_eff_mbcau]
        out += [mme_c[Cp, Ep], mme_c[Cp, Ec], *_mean_std(list(mme_c.values()))]
        out += [mme_e[Cp, Ep], mme_e[Cp, Ec], *_mean_std(list(mme_e.values()))]
        out += [cme[0], *_mean_std(cme)]
        out += [emc[0], emc[1], *_mean_std(emc)]
        out += [mc[0], *_mean_std(mc)]
        out += [ecp[0], *_mean_std(ecp)]
        out += [cep[0], cep[1], *_mean_std(cep)]
        out += [me[0], me[1], *_mean_std(me)]
        out += [mmc[0], mmc[1], *_mean_std(mmc)]
        out += [mmd[0], *_mean_std(mmd)]
        # single-member variants reduce to the parent member
        out += [mme_c[Cp, Ep], mme_e[Cp, Ep], emc[0], cep[0], me[0], mmc[0]]
        return out

    # -- full vector ---------------------------------------------------------

    def compute(self, link) -> DescriptorVector:
        link = CandidateLink(*link)
        rows = self.link_rows(link)
        te, flags = self.te_family(link)
        err, f2 = self.error_based(link, rows)
        values = [*err, *self.linear_coeffs(link, rows), *self.hoc_family(link, rows), *te,
                  *self.legacy(link, rows)]
        values = np.asarray(values, dtype=float)
        bad = ~np.isfinite(values)
        flags = flags + f2
        if bad.any():
            flags += [f"non_finite:{FEATURE_NAMES[c]}" for c in np.flatnonzero(bad)]
            values[bad] = 0.0
        return DescriptorVector(link, values, tuple(flags))


def _dedup(nodes) -> tuple:
    seen = []
    for n in nodes:
        if n not in seen:
            seen.append(n)
    return tuple(seen)


def te_family(link, ds: LaggedDataset, cfg: DescriptorConfig | None = None) -> tuple:
    return SeriesFeaturizer(ds, cfg).te_family(CandidateLink(*link))[0]


def error_based(link, ds: LaggedDataset, cfg: DescriptorConfig | None = None) -> tuple:
    return SeriesFeaturizer(ds, cfg).error_based(CandidateLink(*link))[0]


def hoc_family(link, ds: LaggedDataset) -> np.ndarray:
    return SeriesFeaturizer(ds).hoc_family(CandidateLink(*link))


def linear_coeffs(link, ds: LaggedDataset, cfg: DescriptorConfig | None = None) -> tuple:
    return SeriesFeaturizer(ds, cfg).linear_coeffs(CandidateLink(*link))


def legacy_mi_descriptors(link, ds: LaggedDataset, k_neighbors: int = mi.DEFAULT_K) -> list:
    return SeriesFeaturizer(ds, DescriptorConfig(k_neighbors=k_neighbors)).legacy(CandidateLink(*link))


def compute_vector(link, ds: LaggedDataset, cfg: DescriptorConfig | None = None) -> DescriptorVector:
    return SeriesFeaturizer(ds, cfg).compute(link)


# -- whole-series featurization -------------------------------------------------

def _te_unit(args):
    values, L, cfg, pair = args
    f = SeriesFeaturizer(reshape_lagged(TimeSeriesMatrix(values), L), cfg)
    return f.te_profile(*pair)


def _link_unit(args):
    values, L, cfg, te, links = args
    f = SeriesFeaturizer(reshape_lagged(TimeSeriesMatrix(values), L), cfg)
    f._te.update(te)
    return [f.compute(link) for link in links]


def featurize(ts: TimeSeriesMatrix, L: int, cfg: DescriptorConfig | None = None,
              links=None, jobs: int = 1) -> list:
    """Descriptor vectors for ``links`` (default: every candidate), in input order.

    With ``jobs > 1`` the transfer-entropy profiles are computed first, one
    unit per ordered variable pair, then links are featurized in one unit
    per effect variable.
    """
    from .core import enumerate_candidates
    from .parallel import check_jobs, map_ordered

    jobs = check_jobs(jobs)
    cfg = cfg or DescriptorConfig()
    ts.require_nondegenerate()
    links = [CandidateLink(*l) for l in (links if links is not None else enumerate_candidates(ts.N, L))]
    if jobs == 1:
        f = SeriesFeaturizer(reshape_lagged(ts, L), cfg)
        return [f.compute(link) for link in links]
    reshape_lagged(ts, L)  # validate L before spawning workers
    pairs = sorted({(l.cause, l.effect) for l in links} | {(l.effect, l.cause) for l in links})
    profiles = map_ordered(_te_unit, [(ts.values, L, cfg, p) for p in pairs], jobs)
    te = dict(zip(pairs, profiles))
    groups = {}
    for pos, link in enumerate(links):
        groups.setdefault(link.effect, []).append(pos)
    units = []
    for eff, positions in sorted(groups.items()):
        needed = {p: te[p] for p in te if eff in p}
        units.append((ts.values, L, cfg, needed, [links[p] for p in positions]))
    results = map_ordered(_link_unit, units, jobs)
    out = [None] * len(links)
    for positions, vecs in zip((g for _, g in sorted(groups.items())), results):
        for p, v in zip(positions, vecs):
            out[p] = v
    return out


def _series_unit(args):
    values, L, cfg = args
    return featurize(TimeSeriesMatrix(values), L, cfg)


def featurize_many(series, L: int, cfg: DescriptorConfig | None = None, jobs: int = 1) -> list:
    """One list of descriptor vectors per series; series are the work units."""
    from .parallel import map_ordered

    cfg = cfg or DescriptorConfig()
    for ts in series:
        ts.require_nondegenerate()
    return map_ordered(_series_unit, [(ts.values, L, cfg) for ts in series], jobs)


# -- feature table I/O -----------------------------------------------------------

LINK_COLUMNS = ("cause", "lag", "effect")


def write_feature_csv(vectors, path, labels=None):
    """One row per link: the link triple, 63 features and optionally ``label``."""
    import csv
    from pathlib import Path

    header = list(LINK_COLUMNS) + list(FEATURE_NAMES) + (["label"] if labels is not None else [])
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r, v in enumerate(vectors):
            row = [str(x) for x in v.link] + [repr(float(x)) for x in v.values]
            if labels is not None:
                row.append(str(int(labels[r])))
            w.writerow(row)


def read_feature_csv(path):
    """Inverse of :func:`write_feature_csv`.

    Returns
    -------
    links : list of CandidateLink
    X : ndarray, shape (n, 63)
    labels : ndarray of int or None
    """
    import csv
    from pathlib import Path

    from .errors import SchemaError

    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        expected = list(LINK_COLUMNS) + list(FEATURE_NAMES)
        if header[:len(expected)] != expected or header[len(expected):] not in ([], ["label"]):
            raise SchemaError(f"{path}: header does not match the {N_FEATURES}-feature layout")
        has_label = len(header) > len(expected)
        links, rows, labels = [], [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise SchemaError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            try:
                links.append(CandidateLink(*(int(x) for x in row[:3])))
                rows.append([float(x) for x in row[3:3 + N_FEATURES]])
                if has_label:
                    labels.append(int(row[-1]))
            except ValueError as exc:
                raise SchemaError(f"{path}:{lineno}: {exc}") from None
    X = np.array(rows, dtype=float).reshape(len(rows), N_FEATURES)
    return links, X, (np.array(labels, dtype=int) if has_label else None)

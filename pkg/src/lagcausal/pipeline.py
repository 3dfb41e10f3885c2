"""Training-set construction, inference and decision-threshold selection."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import classifier
from .core import CandidateLink, TemporalGraph, TimeSeriesMatrix, enumerate_candidates
from .descriptors import FEATURE_NAMES, DescriptorConfig, featurize
from .errors import IncompatibleModelError, LagCausalError
from .evaluation import ConfusionCounts, metrics, rates
from .parallel import map_ordered

log = logging.getLogger(__name__)

CRITERIA = ("f1", "pr_breakeven", "youden", "droc")


class LabeledExample(NamedTuple):
    vector: object  # DescriptorVector
    label: int
    provenance: tuple  # (process_id, series index, link)


class ScoredEdge(NamedTuple):
    link: CandidateLink
    probability: float


@dataclass
class TrainingSet:
    examples: list
    skipped: list  # (process_id, index, reason)

    @property
    def X(self) -> np.ndarray:
        return np.array([e.vector.values for e in self.examples]).reshape(len(self.examples), len(FEATURE_NAMES))

    @property
    def y(self) -> np.ndarray:
        return np.array([e.label for e in self.examples], dtype=int)

    @property
    def groups(self) -> np.ndarray:
        return np.array([e.provenance[0] for e in self.examples])


def candidate_universe(N: int, L: int, skip_self: bool = False) -> list:
    return enumerate_candidates(N, L, skip_self=skip_self)


def label_links(links, truth: TemporalGraph) -> np.ndarray:
    return np.array([int(CandidateLink(*l) in truth.edges) for l in links], dtype=int)


def build_training_set(instances, L: int, cfg: DescriptorConfig | None = None, jobs: int = 1,
                       skip_self: bool = False, provenance=None) -> TrainingSet:
    """Featurize and label every candidate of every instance.

    Parameters
    ----------
    instances : sequence of GeneratedInstance
    provenance : sequence of (process_id, index), optional
        Defaults to ``(config.process_id, position)``.
    """
    instances = list(instances)
    if not instances:
        raise ValueError("no instances to build a training set from")
    if provenance is None:
        provenance = [(inst.config.process_id, k) for k, inst in enumerate(instances)]
    cfg = cfg or DescriptorConfig()
    ok, skipped = [], []
    for inst, prov in zip(instances, provenance):
        const = inst.series.constant_columns()
        if const:
            log.warning("skipping series %s: constant column(s) %s", prov, const)
            skipped.append((*prov, f"constant columns {const}"))
        else:
            ok.append((inst, prov))
    vectors = map_ordered(_series_unit, [(inst.series.values, L, cfg, skip_self) for inst, _ in ok], jobs)
    examples = []
    for (inst, prov), vecs in zip(ok, vectors):
        if isinstance(vecs, str):
            log.warning("skipping series %s: %s", prov, vecs)
            skipped.append((*prov, vecs))
            continue
        labels = label_links([v.link for v in vecs], inst.truth)
        examples.extend(LabeledExample(v, int(lab), (*prov, v.link)) for v, lab in zip(vecs, labels))
    if skipped:
        log.warning("%d of %d series skipped", len(skipped), len(instances))
    return TrainingSet(examples, skipped)


def _series_unit(args):
    values, L, cfg, skip_self = args
    ts = TimeSeriesMatrix(values)
    try:
        return featurize(ts, L, cfg, enumerate_candidates(ts.N, L, skip_self=skip_self))
    except LagCausalError as exc:
        return f"{type(exc).__name__}: {exc}"


def train(ts_set: TrainingSet, forest_cfg: classifier.ForestConfig | None = None,
          descriptor_cfg: DescriptorConfig | None = None, L: int | None = None, jobs: int = 1):
    meta = {"descriptor_config": (descriptor_cfg or DescriptorConfig()).to_dict()}
    if L is not None:
        meta["max_lag"] = int(L)
    return classifier.fit(ts_set.X, ts_set.y, forest_cfg, FEATURE_NAMES, jobs=jobs, extra_meta=meta)


def model_descriptor_config(model) -> DescriptorConfig:
    d = model.train_meta.get("descriptor_config")
    return DescriptorConfig.from_dict(d) if d else DescriptorConfig()


def score_vectors(model, vectors) -> list:
    if model.feature_names != FEATURE_NAMES:
        raise IncompatibleModelError("model was trained on a different descriptor layout")
    if not vectors:
        return []
    X = np.array([v.values for v in vectors])
    p = classifier.predict_proba(model, X)
    return [ScoredEdge(v.link, float(q)) for v, q in zip(vectors, p)]


def graph_at(scored, n_vars: int, tau: float) -> TemporalGraph:
    """Links scoring strictly above ``tau``."""
    return TemporalGraph(n_vars, frozenset(s.link for s in scored if s.probability > tau))


def infer(model, ts: TimeSeriesMatrix, L: int, tau: float, jobs: int = 1, skip_self: bool = False):
    """Score every candidate of ``ts`` and threshold the scores."""
    if model.feature_names != FEATURE_NAMES:
        raise IncompatibleModelError("model was trained on a different descriptor layout")
    cfg = model_descriptor_config(model)
    vectors = featurize(ts, L, cfg, enumerate_candidates(ts.N, L, skip_self=skip_self), jobs=jobs)
    scored = score_vectors(model, vectors)
    return scored, graph_at(scored, ts.N, tau)


# -- threshold selection -------------------------------------------------------------

def _confusion_at(scores, labels, tau) -> ConfusionCounts:
    pred = scores > tau
    tp = int(np.sum(pred & (labels == 1)))
    fp = int(np.sum(pred & (labels == 0)))
    fn = int(np.sum(~pred & (labels == 1)))
    return ConfusionCounts(tp, fp, labels.size - tp - fp - fn, fn)


def criterion_value(c: ConfusionCounts, criterion: str) -> float:
    """Objective to maximize (distances and gaps are negated)."""
    m = metrics(c)
    tpr, fpr = rates(c)
    if criterion == "f1":
        return m.f1
    if criterion == "pr_breakeven":
        return -abs(m.precision - m.recall)
    if criterion == "youden":
        return tpr - fpr
    if criterion == "droc":
        return -float(np.hypot(fpr, 1.0 - tpr))
    raise ValueError(f"unknown criterion {criterion!r}; choose from {CRITERIA}")


def sweep_regions(scores) -> list:
    """Intervals of ``tau`` in ``[0, 1]`` on which the decision ``p > tau`` is constant.

    Returns ``(lo, hi, candidate)`` triples.  Regions are ``[lo, hi)`` except
    the final point region ``[1, 1]``.  Candidates are 0, 1 and midpoints
    between consecutive distinct scores.
    """
    inner = [float(x) for x in np.unique(np.asarray(scores, dtype=float)) if 0.0 < x < 1.0]
    cuts = [0.0] + inner + [1.0]
    regions = []
    for a, b in zip(cuts[:-1], cuts[1:]):
        regions.append((a, b, 0.0 if a == 0.0 else 0.5 * (a + b)))
    regions.append((1.0, 1.0, 1.0))
    return regions


def sweep(scores, labels, criterion: str) -> list:
    """``(lo, hi, tau, value)`` for every decision region."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=int)
    return [(lo, hi, tau, criterion_value(_confusion_at(scores, labels, tau), criterion))
            for lo, hi, tau in sweep_regions(scores)]


def best_threshold(scores, labels, criterion: str) -> float:
    """Midpoint of the widest run of optimal decision regions."""
    rows = sweep(scores, labels, criterion)
    best = max(v for *_, v in rows)
    tol = 1e-12 * max(1.0, abs(best))
    runs, cur = [], None
    for lo, hi, _, v in rows:
        if v >= best - tol:
            cur = [lo, hi] if cur is None else [cur[0], hi]
        elif cur is not None:
            runs.append(cur)
            cur = None
    if cur is not None:
        runs.append(cur)
    lo, hi = max(runs, key=lambda r: (r[1] - r[0], -r[0]))
    return 0.5 * (lo + hi)


class ThresholdReport(NamedTuple):
    criterion: str
    folds: tuple  # (held-out group, threshold) per completed fold
    skipped: tuple  # held-out groups without both classes
    mean: float
    std: float

    def to_dict(self) -> dict:
        return {"criterion": self.criterion, "mean": self.mean, "std": self.std,
                "folds": [{"group": g, "threshold": t} for g, t in self.folds],
                "skipped": list(self.skipped)}


def lopo_folds(groups) -> list:
    """``(group, train_idx, test_idx)`` for each distinct group, in sorted order."""
    groups = np.asarray(groups)
    out = []
    for g in sorted(set(groups.tolist())):
        test = np.flatnonzero(groups == g)
        train_idx = np.flatnonzero(groups != g)
        out.append((g, train_idx, test))
    return out


def _fold_unit(args):
    X, y, train_idx, test_idx, fcfg = args
    model = classifier.fit(X[train_idx], y[train_idx], fcfg, FEATURE_NAMES)
    return classifier.predict_proba(model, X[test_idx])


def lopo_scores(X, y, groups, forest_cfg=None, jobs: int = 1) -> list:
    """Held-out scores per fold: ``(group, test_idx, scores)``; one fit per fold."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=int)
    folds = lopo_folds(groups)
    if len(folds) < 2:
        raise ValueError("threshold selection needs at least two process groups")
    usable = [(g, tr, te) for g, tr, te in folds if 0 < y[tr].sum() < tr.size]
    scores = map_ordered(_fold_unit, [(X, y, tr, te, forest_cfg) for _, tr, te in usable], jobs)
    return [(g, te, s) for (g, _, te), s in zip(usable, scores)]


def select_threshold(X, y, groups, criterion: str = "droc", forest_cfg=None, jobs: int = 1,
                     fold_scores=None) -> ThresholdReport:
    """Leave-one-process-out threshold selection.

    For every process the forest is refit on the others and the held-out
    scores are swept; the per-fold optimum follows ``criterion``.  Folds
    whose held-out part lacks a class are skipped.  ``fold_scores`` can be
    passed from :func:`lopo_scores` to evaluate several criteria on one set
    of fits.
    """
    if criterion not in CRITERIA:
        raise ValueError(f"unknown criterion {criterion!r}; choose from {CRITERIA}")
    y = np.asarray(y, dtype=int)
    if fold_scores is None:
        fold_scores = lopo_scores(X, y, groups, forest_cfg, jobs)
    done, skipped = [], []
    for g, te, s in fold_scores:
        yt = y[te]
        if yt.min() == yt.max():
            log.warning("fold %s skipped: held-out data has a single class", g)
            skipped.append(g)
            continue
        done.append((g, best_threshold(s, yt, criterion)))
    taus = np.array([t for _, t in done])
    mean = float(taus.mean()) if taus.size else float("nan")
    std = float(taus.std()) if taus.size else float("nan")
    return ThresholdReport(criterion, tuple(done), tuple(skipped), mean, std)

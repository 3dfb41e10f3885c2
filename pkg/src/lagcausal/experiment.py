"""Desk-scale benchmark: train on odd processes, test on even ones.

The protocol mirrors the full benchmark at a reduced size: generate labeled
series, featurize, pick the decision threshold by leave-one-process-out
cross-validation on the training processes, then score the held-out
processes against the linear baselines.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import classifier, pipeline
from .core import enumerate_candidates
from .descriptors import DescriptorConfig
from .evaluation import BASELINES, confusion, metrics
from .synthgen import NOISE_KINDS, TEST_PROCESSES, TRAIN_PROCESSES, GenConfig, generate

# rejection sampling needs many draws for the least stable process (13)
PROTOCOL_RETRIES = 5000


@dataclass(frozen=True)
class ProtocolConfig:
    train_processes: tuple = TRAIN_PROCESSES
    test_processes: tuple = TEST_PROCESSES
    noises: tuple = NOISE_KINDS
    n_train: int = 10
    n_test: int = 5
    T: int = 250
    N: int = 5
    L: int = 3
    seed: int = 0
    criterion: str = "droc"
    forest: classifier.ForestConfig = field(default_factory=classifier.ForestConfig)
    descriptors: DescriptorConfig = field(default_factory=DescriptorConfig)


def instance_seed(seed: int, process_id: int, noise: str) -> int:
    """Independent generator seed per (process, noise) cell."""
    ss = np.random.SeedSequence([seed, process_id, NOISE_KINDS.index(noise)])
    return int(ss.generate_state(1, np.uint64)[0] >> np.uint64(1))


def make_instances(processes, noises, count: int, cfg: ProtocolConfig, offset: int = 0) -> tuple:
    instances, prov = [], []
    for p in processes:
        for nk in noises:
            gc = GenConfig(p, N=cfg.N, T=cfg.T, noise_kind=nk, seed=instance_seed(cfg.seed, p, nk),
                           max_retries=PROTOCOL_RETRIES)
            for k in range(offset, offset + count):
                instances.append(generate(gc, k))
                prov.append((p, f"{nk}:{k}"))
    return instances, prov


def run(cfg: ProtocolConfig | None = None, jobs: int = 1, log=print) -> dict:
    """Run the protocol and return a JSON-ready summary."""
    cfg = cfg or ProtocolConfig()
    t0 = time.perf_counter()
    train_inst, train_prov = make_instances(cfg.train_processes, cfg.noises, cfg.n_train, cfg)
    # test series use disjoint instance indices
    test_inst, test_prov = make_instances(cfg.test_processes, cfg.noises, cfg.n_test, cfg, offset=10_000)
    log(f"generated {len(train_inst)} training and {len(test_inst)} test series")
    train_set = pipeline.build_training_set(train_inst, cfg.L, cfg.descriptors, jobs, provenance=train_prov)
    test_set = pipeline.build_training_set(test_inst, cfg.L, cfg.descriptors, jobs, provenance=test_prov)
    log(f"featurized: {len(train_set.examples)} train rows, {len(test_set.examples)} test rows "
        f"({time.perf_counter() - t0:.0f}s)")
    X, y, groups = train_set.X, train_set.y, train_set.groups
    fold_scores = pipeline.lopo_scores(X, y, groups, cfg.forest, jobs)
    reports = {c: pipeline.select_threshold(X, y, groups, c, fold_scores=fold_scores).to_dict()
               for c in pipeline.CRITERIA}
    tau = reports[cfg.criterion]["mean"]
    log(f"threshold ({cfg.criterion}) = {tau:.3f} ({time.perf_counter() - t0:.0f}s)")
    model = pipeline.train(train_set, cfg.forest, cfg.descriptors, cfg.L, jobs)

    # regroup test rows per series
    per_series = {}
    for e in test_set.examples:
        per_series.setdefault(e.provenance[:2], []).append(e)
    universe = enumerate_candidates(cfg.N, cfg.L)
    truth_of = {prov: inst.truth.restricted(cfg.L) for inst, prov in zip(test_inst, test_prov)}
    series_of = {prov: inst.series for inst, prov in zip(test_inst, test_prov)}
    rows = {name: [] for name in ("lagcausal", *BASELINES)}
    for prov, exs in per_series.items():
        scored = pipeline.score_vectors(model, [e.vector for e in exs])
        pred = pipeline.graph_at(scored, cfg.N, tau)
        rows["lagcausal"].append((prov, metrics(confusion(pred, truth_of[prov], universe))))
        for name, fn in BASELINES.items():
            g = fn(series_of[prov], cfg.L)
            rows[name].append((prov, metrics(confusion(g, truth_of[prov], universe))))
    summary = {}
    for name, items in rows.items():
        M = np.array([list(m) for _, m in items])
        summary[name] = {k: float(v) for k, v in zip(("precision", "recall", "f1", "accuracy",
                                                        "balanced_accuracy"), M.mean(axis=0))}
    log(f"done ({time.perf_counter() - t0:.0f}s)")
    return {
        "threshold": tau,
        "threshold_reports": reports,
        "metrics": summary,
        "per_series": {name: [{"process": p[0], "series": p[1], **m._asdict()} for p, m in items]
                       for name, items in rows.items()},
        "n_train_rows": len(train_set.examples),
        "n_test_rows": len(test_set.examples),
        "skipped": [list(map(str, s)) for s in train_set.skipped + test_set.skipped],
        "importance_top15": classifier.importance_rows(model)[:15],
        "seconds": time.perf_counter() - t0,
    }

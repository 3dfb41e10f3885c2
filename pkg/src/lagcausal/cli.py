"""Command-line interface: ``lagcausal <subcommand> [flags]``.

Every subcommand writes canonical, deterministic output.  Failures print a
single JSON object on stderr and exit with a code that identifies the kind
of failure (see ``EXIT_CODES``).
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import classifier, dsep, evaluation, pipeline
from .core import TemporalGraph, enumerate_candidates, read_series_csv, write_series_csv
from .descriptors import (FEATURE_NAMES, DescriptorConfig, TEConfig, featurize,
                          read_feature_csv, write_feature_csv)
from .errors import (IncompatibleModelError, LagCausalError, ModelFormatError, SchemaError)
from .synthgen import NOISE_KINDS, PROCESS_IDS, GenConfig, generate

EXIT_CODES = {
    "internal": 1,
    "usage": 2,
    "unknown_flag": 3,
    "missing_file": 4,
    "schema_mismatch": 5,
    "incompatible_model": 6,
    "invalid_input": 7,
}


class CliError(Exception):
    def __init__(self, kind: str, message: str):
        super().__init__(message)
        self.kind = kind


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        kind = "unknown_flag" if message.startswith("unrecognized arguments") else "usage"
        raise CliError(kind, message)


def _dump_json(obj, path=None):
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if path is None or str(path) == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _write_csv(rows, path=None):
    if path is None or str(path) == "-":
        csv.writer(sys.stdout, lineterminator="\n").writerows(rows)
        return
    with Path(path).open("w", newline="") as fh:
        csv.writer(fh, lineterminator="\n").writerows(rows)


def _existing(path) -> Path:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"{p}: no such file or directory")
    return p


def _require_seed(args):
    if args.seed is None:
        raise CliError("usage", f"{args.command} requires --seed")


def load_config(path) -> dict:
    """Flat ``key = value`` file; ``#`` starts a comment.  Keys may use ``-`` or ``_``."""
    out = {}
    for lineno, raw in enumerate(_existing(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise SchemaError(f"{path}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


# -- descriptor flags shared by several subcommands ----------------------------------

def _add_descriptor_flags(p):
    p.add_argument("--max-lag", type=int, default=3, help="maximal lag L")
    p.add_argument("--k-neighbors", type=int, default=3, help="KSG neighbour count")
    p.add_argument("--ridge-lambda", type=float, default=1.0)
    p.add_argument("--te-kmax", type=int, default=15, help="largest TE history lag")
    p.add_argument("--skip-self-links", "--skip-self", dest="skip_self", action="store_true",
                   help="drop self-lag candidates")


def _descriptor_config(args) -> DescriptorConfig:
    return DescriptorConfig(TEConfig(k_max=args.te_kmax), k_neighbors=args.k_neighbors,
                            ridge_lambda=args.ridge_lambda)


def _add_forest_flags(p):
    p.add_argument("--trees", type=int, default=100)
    p.add_argument("--max-depth", type=int, default=None)
    p.add_argument("--min-leaf", type=int, default=1)
    p.add_argument("--mtry", type=int, default=None, help="features tried per split")


def _forest_config(args) -> classifier.ForestConfig:
    return classifier.ForestConfig(n_trees=args.trees, max_depth=args.max_depth,
                                   min_samples_leaf=args.min_leaf, features_per_split=args.mtry,
                                   seed=args.seed)


# -- feature collections -----------------------------------------------------------

def _feature_files(paths) -> list:
    files = []
    for p in map(_existing, paths):
        files.extend(sorted(p.glob("*.csv")) if p.is_dir() else [p])
    if not files:
        raise CliError("invalid_input", "no feature files found")
    return files


def _group_of(path: Path) -> str:
    """Files from ``generate`` are named ``{process}_{noise}_{index}``."""
    return path.stem.split("_", 1)[0]


def _load_labeled(paths):
    links, blocks, labels, groups = [], [], [], []
    for f in _feature_files(paths):
        lk, X, y = read_feature_csv(f)
        if y is None:
            raise SchemaError(f"{f}: no label column; featurize with a truth file")
        links.extend(lk)
        blocks.append(X)
        labels.append(y)
        groups.extend([_group_of(f)] * len(lk))
    return links, np.vstack(blocks), np.concatenate(labels), np.array(groups)


# -- subcommands -------------------------------------------------------------------

def cmd_generate(args):
    _require_seed(args)
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    cfg = GenConfig(args.process, N=args.n, T=args.t, noise_kind=args.noise, noise_scale=args.noise_scale,
                    max_parents=args.max_parents, seed=args.seed, max_retries=args.max_retries)
    written = []
    for index in range(args.start, args.start + args.count):
        inst = generate(cfg, index)
        stem = out / f"{args.process}_{args.noise}_{index}"
        write_series_csv(inst.series, stem.with_suffix(".csv"))
        truth = inst.truth.to_dict()
        truth.update(process=args.process, noise=args.noise, index=index, seed=args.seed,
                     parent_sets=[sorted(map(int, s)) for s in inst.parent_sets])
        _dump_json(truth, stem.with_suffix(".json"))
        written.append(stem.name)
    _dump_json({"written": written})


def _featurize_one(src: Path, truth_path, args, dst):
    ts = read_series_csv(src)
    links = enumerate_candidates(ts.N, args.max_lag, skip_self=args.skip_self)
    vectors = featurize(ts, args.max_lag, _descriptor_config(args), links, jobs=args.jobs)
    vectors.sort(key=lambda v: tuple(v.link))
    labels = None
    if truth_path is not None:
        truth = TemporalGraph.load(_existing(truth_path))
        if truth.n_vars != ts.N:
            raise SchemaError(f"{truth_path}: truth has {truth.n_vars} variables, series has {ts.N}")
        labels = pipeline.label_links([v.link for v in vectors], truth)
    if dst is None:
        write_feature_csv(vectors, "/dev/stdout", labels)
    else:
        write_feature_csv(vectors, dst, labels)
    return len(vectors)


def cmd_featurize(args):
    src = _existing(args.input)
    if src.is_dir():
        if args.out is None:
            raise CliError("usage", "featurizing a directory requires --out DIR")
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        files = sorted(f for f in src.glob("*.csv"))
        if not files:
            raise CliError("invalid_input", f"{src}: no series CSV files")
        counts = {}
        for f in files:
            truth = f.with_suffix(".json")
            counts[f.stem] = _featurize_one(f, truth if truth.exists() else None, args, out / f.name)
        _dump_json({"rows": counts})
        return
    truth = args.truth
    if truth is None and src.with_suffix(".json").exists():
        truth = src.with_suffix(".json")
    _featurize_one(src, truth, args, args.out)


def cmd_train(args):
    _require_seed(args)
    links, X, y, groups = _load_labeled(args.features)
    cfg = _descriptor_config(args)
    meta = {"descriptor_config": cfg.to_dict(), "max_lag": args.max_lag}
    model = classifier.fit(X, y, _forest_config(args), FEATURE_NAMES, jobs=args.jobs, extra_meta=meta)
    out = args.out or "model.lcrf"
    classifier.save(model, out)
    _dump_json({"model": str(out), "fingerprint": model.fingerprint(), "n_examples": int(len(y)),
                "n_positive": int(y.sum())})


def cmd_predict(args):
    model = classifier.load(_existing(args.model))
    classifier.require_features(model, FEATURE_NAMES)
    ts = read_series_csv(_existing(args.input))
    L = args.max_lag if args.max_lag is not None else int(model.train_meta.get("max_lag", 3))
    scored, graph = pipeline.infer(model, ts, L, args.threshold, jobs=args.jobs, skip_self=args.skip_self)
    scored = sorted(scored, key=lambda s: (s.link.effect, s.link.cause, s.link.lag))
    if args.scores:
        _write_csv([["cause", "lag", "effect", "probability"]]
                   + [[*map(str, s.link), repr(s.probability)] for s in scored], args.scores)
    doc = graph.to_dict()
    doc.update(threshold=args.threshold, max_lag=L, model_fingerprint=model.fingerprint())
    _dump_json(doc, args.out)


def cmd_evaluate(args):
    truth = TemporalGraph.load(_existing(args.truth))
    if args.predicted:
        pred = TemporalGraph.load(_existing(args.predicted))
    elif args.baseline:
        if not args.input:
            raise CliError("usage", "--baseline needs --input SERIES")
        ts = read_series_csv(_existing(args.input))
        pred = evaluation.BASELINES[args.baseline](ts, args.max_lag)
    else:
        raise CliError("usage", "give --predicted GRAPH or --baseline NAME")
    if pred.n_vars != truth.n_vars:
        raise SchemaError(f"predicted graph has {pred.n_vars} variables, truth has {truth.n_vars}")
    L = args.max_lag
    universe = enumerate_candidates(truth.n_vars, L, skip_self=args.skip_self)
    truth = truth.restricted(L)
    if args.skip_self:
        truth = TemporalGraph(truth.n_vars, frozenset(e for e in truth.edges if e.cause != e.effect))
    c = evaluation.confusion(pred, truth, universe)
    _dump_json({"confusion": c._asdict(), "metrics": evaluation.metrics(c)._asdict(), "max_lag": L},
               args.out)


def cmd_threshold(args):
    _require_seed(args)
    _, X, y, groups = _load_labeled(args.features)
    fold_scores = pipeline.lopo_scores(X, y, groups, _forest_config(args), args.jobs)
    crits = pipeline.CRITERIA if args.criterion == "all" else (args.criterion,)
    reports = {c: pipeline.select_threshold(X, y, groups, c, fold_scores=fold_scores).to_dict() for c in crits}
    _dump_json(reports if len(crits) > 1 else reports[crits[0]], args.out)


def cmd_stattest(args):
    with _existing(args.scores).open(newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if len(rows) < 3:
        raise SchemaError(f"{args.scores}: need a header row and at least two methods")
    width = len(rows[0])
    names, values = [], []
    for lineno, r in enumerate(rows[1:], start=2):
        if len(r) != width:
            raise SchemaError(f"{args.scores}:{lineno}: expected {width} fields, got {len(r)}")
        try:
            values.append([float(x) for x in r[1:]])
        except ValueError as exc:
            raise SchemaError(f"{args.scores}:{lineno}: {exc}") from None
        names.append(r[0])
    _dump_json(evaluation.average_ranks(np.array(values), names, args.alpha), args.out)


def cmd_pathcount(args):
    rows = dsep.asymmetry_table(args.scenario, args.kmax, tuple(args.window), args.source_time, args.anchor)
    _write_csv(dsep.table_csv_rows(args.scenario, rows), args.out)


def cmd_importance(args):
    model = classifier.load(_existing(args.model))
    _write_csv([["rank", "name", "score"]]
               + [[str(r), n, repr(s)] for r, n, s in classifier.importance_rows(model)], args.out)


# -- parser ------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--jobs", type=int, default=1, help="parallel workers (>= 1)")
    common.add_argument("--out", default=None, help="output path ('-' or omitted: stdout)")
    common.add_argument("--config", default=None, help="flat key = value file; flags win")

    parser = _Parser(prog="lagcausal", description="Supervised lagged causal discovery.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("generate", parents=[common], help="simulate labeled benchmark series")
    p.add_argument("--process", type=int, required=True, choices=PROCESS_IDS)
    p.add_argument("--n", type=int, default=5)
    p.add_argument("--t", type=int, default=250)
    p.add_argument("--noise", default="gaussian", choices=NOISE_KINDS)
    p.add_argument("--noise-scale", type=float, default=1.0)
    p.add_argument("--max-parents", type=int, default=2)
    p.add_argument("--max-retries", type=int, default=5000)
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--start", type=int, default=0, help="first series index")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("featurize", parents=[common], help="descriptor table for every candidate link")
    p.add_argument("--input", required=True, help="series CSV or a directory of them")
    p.add_argument("--truth", default=None, help="truth JSON (default: sibling .json if present)")
    _add_descriptor_flags(p)
    p.set_defaults(func=cmd_featurize)

    p = sub.add_parser("train", parents=[common], help="fit the forest on labeled feature tables")
    p.add_argument("--features", nargs="+", required=True, help="labeled feature CSVs or directories")
    _add_descriptor_flags(p)
    _add_forest_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", parents=[common], help="score and threshold every candidate of a series")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--max-lag", type=int, default=None, help="default: the lag used in training")
    p.add_argument("--skip-self-links", "--skip-self", dest="skip_self", action="store_true")
    p.add_argument("--scores", default=None, help="also write per-link probabilities to this CSV")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", parents=[common], help="confusion counts and metrics against a truth graph")
    p.add_argument("--truth", required=True)
    p.add_argument("--predicted", default=None)
    p.add_argument("--baseline", default=None, choices=sorted(evaluation.BASELINES))
    p.add_argument("--input", default=None, help="series CSV for --baseline")
    p.add_argument("--max-lag", type=int, default=3)
    p.add_argument("--skip-self-links", "--skip-self", dest="skip_self", action="store_true")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("threshold", parents=[common], help="leave-one-process-out threshold selection")
    p.add_argument("--features", nargs="+", required=True,
                   help="labeled feature CSVs named {process}_..., or directories of them")
    p.add_argument("--criterion", default="droc", choices=(*pipeline.CRITERIA, "all"))
    _add_forest_flags(p)
    p.set_defaults(func=cmd_threshold)

    p = sub.add_parser("stattest", parents=[common], help="Friedman and Wilcoxon-Holm comparison")
    p.add_argument("--scores", required=True, help="CSV: header row, then one method per row")
    p.add_argument("--alpha", type=float, default=0.05)
    p.set_defaults(func=cmd_stattest)

    p = sub.add_parser("pathcount", parents=[common], help="open-path asymmetry table of a scenario DAG")
    p.add_argument("--scenario", type=int, required=True, choices=(1, 2, 3))
    p.add_argument("--kmax", type=int, default=9)
    p.add_argument("--window", type=int, nargs=2, default=list(dsep.WINDOW), metavar=("LO", "HI"))
    p.add_argument("--source-time", type=int, default=dsep.DEFAULT_SOURCE_TIME)
    p.add_argument("--anchor", default="source", choices=("source", "target"))
    p.set_defaults(func=cmd_pathcount)

    p = sub.add_parser("importance", parents=[common], help="feature importances of a saved model")
    p.add_argument("--model", required=True)
    p.set_defaults(func=cmd_importance)
    return parser


def _apply_config(parser, argv):
    """Install config-file values as subcommand defaults, then parse; flags win."""
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config", default=None)
    known, _ = pre.parse_known_args(argv)
    subparsers = parser._subparsers._group_actions[0].choices
    command = next((a for a in argv if a in subparsers), None)
    if known.config is None or command is None:
        return parser.parse_args(argv)
    sub = subparsers[command]
    actions = {a.dest: a for a in sub._actions}
    for a in sub._actions:
        for opt in a.option_strings:
            actions.setdefault(opt.lstrip("-").replace("-", "_"), a)
    defaults = {}
    for key, raw in load_config(known.config).items():
        if key in ("config", "help") or key not in actions:
            raise CliError("unknown_flag", f"config key {key!r} is not a flag of {command}")
        act = actions[key]
        key = act.dest
        try:
            if isinstance(act, argparse._StoreTrueAction):
                value = raw.lower() in ("1", "true", "yes", "on")
            elif act.nargs not in (None, "?"):
                value = [act.type(x) if act.type else x for x in raw.split()]
            else:
                value = act.type(raw) if act.type else raw
        except ValueError as exc:
            raise CliError("usage", f"config key {key!r}: {exc}") from None
        if act.choices is not None and value not in act.choices:
            raise CliError("usage", f"config key {key!r}: {raw!r} not in {list(act.choices)}")
        defaults[key] = value
        act.required = False
    sub.set_defaults(**defaults)
    return parser.parse_args(argv)


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        parser = build_parser()
        args = _apply_config(parser, argv)
        if args.jobs < 1:
            raise CliError("usage", f"--jobs must be >= 1, got {args.jobs}")
        args.func(args)
        return 0
    except CliError as exc:
        kind, msg = exc.kind, str(exc)
    except FileNotFoundError as exc:
        kind, msg = "missing_file", str(exc)
    except (SchemaError, ModelFormatError, UnicodeDecodeError) as exc:
        kind, msg = "schema_mismatch", str(exc)
    except IncompatibleModelError as exc:
        kind, msg = "incompatible_model", str(exc)
    except (LagCausalError, ValueError) as exc:
        kind, msg = "invalid_input", f"{type(exc).__name__}: {exc}"
    except Exception as exc:  # pragma: no cover - last-resort report
        kind, msg = "internal", f"{type(exc).__name__}: {exc}"
    code = EXIT_CODES[kind]
    sys.stderr.write(json.dumps({"error": kind, "exit_code": code, "message": msg}, sort_keys=True) + "\n")
    return code


if __name__ == "__main__":
    sys.exit(main())

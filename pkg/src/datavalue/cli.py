"""Command-line front end.

Three subcommands: ``compute`` (per-tuple values as JSON), ``evaluate`` (the
mode x model x direction retraining grid), and ``export-figure`` (plot-ready
CSV of one training set with value/support-vector flags).

stdout carries only the machine-readable payload; everything else goes to
stderr. Exit codes: 0 success, 1 runtime or data error, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
import time
from pathlib import Path

from . import __version__
from .datasets import (
    DEFAULT_LABEL_COLUMN,
    Dataset,
    SplitConfig,
    filter_iris_2d,
    iris_path,
    load_csv,
    subset,
    train_test_split,
)
from .evaluation import (
    DEFAULT_OVERLAP_K,
    EvaluationReport,
    SelectionDirection,
    aggregate_reports,
    compare_modes,
    rank_topk,
)
from .models import CoalitionUtility, ModelKind, default_spec, support_vectors, train
from .shapley import AggregationMode, McConfig, exact_shapley, monte_carlo_shapley

_FIGURE_K = 10  # fixed by the in_highest10 / in_lowest10 column schema


class UsageError(Exception):
    """Bad flag combination detected after parsing."""


def _parse_modes(text: str) -> list[AggregationMode]:
    tokens = [t.strip() for t in text.split(",") if t.strip()]
    if not tokens:
        raise argparse.ArgumentTypeError("at least one mode is required")
    try:
        modes = [AggregationMode(t) for t in tokens]
    except ValueError:
        valid = ", ".join(m.value for m in AggregationMode)
        raise argparse.ArgumentTypeError(f"modes must be among: {valid}")
    return list(dict.fromkeys(modes))


def _parse_models(text: str) -> list[ModelKind]:
    tokens = [t.strip() for t in text.split(",") if t.strip()]
    if not tokens:
        raise argparse.ArgumentTypeError("at least one model is required")
    try:
        kinds = [ModelKind(t) for t in tokens]
    except ValueError:
        valid = ", ".join(k.value for k in ModelKind)
        raise argparse.ArgumentTypeError(f"models must be among: {valid}")
    return list(dict.fromkeys(kinds))


def _parse_seed_list(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError("seeds must be a comma-separated integer list")


def _add_data_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", default=str(iris_path()), help="CSV dataset path (default: bundled iris)")
    p.add_argument("--label-col", default=DEFAULT_LABEL_COLUMN, help="label column name")
    p.add_argument("--iris-2d", action="store_true", help="reduce full Iris to the 2-feature, 2-class slice")


def _add_split_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--test-count", type=int, default=20, help="held-out test tuples")
    p.add_argument("--split-seed", type=int, default=0, help="train/test split seed")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="datavalue",
        description="Per-tuple Shapley-value data valuation",
    )
    parser.add_argument("--version", action="version", version=f"datavalue {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    c = sub.add_parser("compute", help="compute per-tuple values")
    _add_data_flags(c)
    _add_split_flags(c)
    c.add_argument("--model", choices=[k.value for k in ModelKind], default="svm")
    c.add_argument("--modes", type=_parse_modes, default=list(AggregationMode))
    c.add_argument("--permutations", type=int, default=200)
    c.add_argument("--seed", type=int, default=0, help="Monte Carlo master seed")
    c.add_argument("--workers", type=int, default=1)
    c.add_argument("--exact", action="store_true", help="exact enumeration instead of sampling")
    c.add_argument("--out", default=None, help="write JSON here instead of stdout")
    c.set_defaults(func=cmd_compute)

    e = sub.add_parser("evaluate", help="run the retraining grid")
    _add_data_flags(e)
    e.add_argument("--test-count", type=int, default=20)
    e.add_argument("--split-seeds", type=_parse_seed_list, default=[0, 1, 2, 3, 4])
    e.add_argument("--k", type=int, default=35, help="selection size for retraining")
    e.add_argument("--models", type=_parse_models, default=list(ModelKind))
    e.add_argument("--permutations", type=int, default=200)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--workers", type=int, default=1)
    e.add_argument("--out", default=None)
    e.set_defaults(func=cmd_evaluate)

    f = sub.add_parser("export-figure", help="CSV of one training set with value flags")
    f.add_argument("--values", required=True, help="values JSON from a compute run")
    _add_data_flags(f)
    f.add_argument("--mode", choices=[m.value for m in AggregationMode], default=None,
                   help="which estimate to use when the file holds several")
    f.add_argument("--out", default=None)
    f.set_defaults(func=cmd_export_figure)

    return parser


def _load_dataset(args: argparse.Namespace) -> Dataset:
    ds = load_csv(args.data, args.label_col)
    if args.iris_2d:
        ds = filter_iris_2d(ds)
    return ds


def _emit(payload: str, args: argparse.Namespace, manifest: dict) -> None:
    """Write the payload to --out (manifest alongside) or stdout."""
    if args.out:
        out = Path(args.out)
        out.write_text(payload, encoding="utf-8")
        manifest_path = out.with_suffix(".manifest.json")
        manifest_path.write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
        print(f"wrote {out} and {manifest_path}", file=sys.stderr)
    else:
        sys.stdout.write(payload)


def _manifest(command: str, argv: list[str], config: dict, started: float) -> dict:
    return {
        "tool": "datavalue",
        "version": __version__,
        "command": command,
        "argv": argv,
        "config": config,
        "duration_seconds": round(time.monotonic() - started, 3),
    }


def cmd_compute(args: argparse.Namespace) -> int:
    started = time.monotonic()
    ds = _load_dataset(args)
    train_set, test_set = train_test_split(ds, SplitConfig(args.test_count, args.split_seed))
    spec = default_spec(ModelKind(args.model))
    n = len(train_set)
    u = CoalitionUtility(spec, train_set, test_set)
    ids = [int(i) for i in train_set.ids]

    docs = []
    if args.exact:
        for mode in args.modes:
            values = exact_shapley(u, n, mode)
            docs.append({
                "mode": mode.value,
                "seed": args.seed,
                "permutations": None,
                "converged": True,
                "values": [
                    {"id": i, "value": float(v), "variance": 0.0}
                    for i, v in zip(ids, values)
                ],
            })
    else:
        cfg = McConfig(
            max_permutations=args.permutations,
            master_seed=args.seed,
            workers=args.workers,
        )
        estimates = monte_carlo_shapley(u, n, args.modes, cfg)
        docs = [estimates[mode].to_json_dict(ids) for mode in args.modes]

    payload = json.dumps(docs, indent=2) + "\n"
    config = {
        "data": args.data,
        "label_col": args.label_col,
        "iris_2d": args.iris_2d,
        "test_count": args.test_count,
        "split_seed": args.split_seed,
        "model": spec.to_config(),
        "modes": [m.value for m in args.modes],
        "permutations": args.permutations,
        "seed": args.seed,
        "workers": args.workers,
        "exact": args.exact,
    }
    _emit(payload, args, _manifest("compute", _compute_argv(args), config, started))
    return 0


def _compute_argv(args: argparse.Namespace) -> list[str]:
    argv = [
        "compute",
        "--data", args.data,
        "--label-col", args.label_col,
        "--test-count", str(args.test_count),
        "--split-seed", str(args.split_seed),
        "--model", args.model,
        "--modes", ",".join(m.value for m in args.modes),
        "--permutations", str(args.permutations),
        "--seed", str(args.seed),
        "--workers", str(args.workers),
    ]
    if args.iris_2d:
        argv.append("--iris-2d")
    if args.exact:
        argv.append("--exact")
    if args.out:
        argv += ["--out", args.out]
    return argv


def cmd_evaluate(args: argparse.Namespace) -> int:
    started = time.monotonic()
    ds = _load_dataset(args)
    specs = [default_spec(kind) for kind in args.models]

    reports: list[EvaluationReport] = []
    for split_seed in args.split_seeds:
        train_set, test_set = train_test_split(ds, SplitConfig(args.test_count, split_seed))
        if not 1 <= args.k <= len(train_set):
            raise UsageError(f"--k must be in 1..{len(train_set)}, got {args.k}")
        cfg = McConfig(
            max_permutations=args.permutations,
            master_seed=args.seed,
            workers=args.workers,
        )
        reports.append(
            compare_modes(
                train_set, test_set, specs, args.k, cfg,
                extra_metadata={"split_seed": split_seed},
            )
        )
    mean_report = aggregate_reports(reports)

    document = {
        "k": args.k,
        "overlap_k": DEFAULT_OVERLAP_K,
        "permutations": args.permutations,
        "master_seed": args.seed,
        "split_seeds": args.split_seeds,
        "models": [spec.to_config() for spec in specs],
        "per_seed": [r.to_json_dict() for r in reports],
        "mean": mean_report.to_json_dict(),
    }
    payload = json.dumps(document, indent=2) + "\n"
    print(mean_report.to_text_table(), file=sys.stderr)

    config = {
        "data": args.data,
        "label_col": args.label_col,
        "iris_2d": args.iris_2d,
        "test_count": args.test_count,
        "split_seeds": args.split_seeds,
        "k": args.k,
        "models": [spec.to_config() for spec in specs],
        "permutations": args.permutations,
        "seed": args.seed,
        "workers": args.workers,
    }
    _emit(payload, args, _manifest("evaluate", _evaluate_argv(args), config, started))
    return 0


def _evaluate_argv(args: argparse.Namespace) -> list[str]:
    argv = [
        "evaluate",
        "--data", args.data,
        "--label-col", args.label_col,
        "--test-count", str(args.test_count),
        "--split-seeds", ",".join(str(s) for s in args.split_seeds),
        "--k", str(args.k),
        "--models", ",".join(k.value for k in args.models),
        "--permutations", str(args.permutations),
        "--seed", str(args.seed),
        "--workers", str(args.workers),
    ]
    if args.iris_2d:
        argv.append("--iris-2d")
    if args.out:
        argv += ["--out", args.out]
    return argv


def cmd_export_figure(args: argparse.Namespace) -> int:
    started = time.monotonic()
    raw = Path(args.values).read_text(encoding="utf-8")
    if not raw.strip():
        raise ValueError(f"{args.values}: empty values file")
    document = json.loads(raw)
    if isinstance(document, dict):
        document = [document]
    if not isinstance(document, list) or not document:
        raise ValueError(f"{args.values}: expected a values document or list of them")

    by_mode = {doc.get("mode"): doc for doc in document}
    if args.mode is not None:
        if args.mode not in by_mode:
            raise ValueError(f"{args.values}: no estimate for mode {args.mode!r}")
        doc = by_mode[args.mode]
    elif len(document) == 1:
        doc = document[0]
    else:
        raise UsageError(
            f"--mode is required: {args.values} holds modes "
            f"{sorted(m for m in by_mode if m)}"
        )
    entries = doc.get("values") or []
    if not entries:
        raise ValueError(f"{args.values}: estimate holds no values")
    ids = [int(e["id"]) for e in entries]
    values = [float(e["value"]) for e in entries]

    ds = _load_dataset(args)
    if ds.num_features != 2:
        raise ValueError("figure export requires a 2-feature dataset (use --iris-2d for Iris)")
    id_to_pos = {int(tid): pos for pos, tid in enumerate(ds.ids)}
    missing = [i for i in ids if i not in id_to_pos]
    if missing:
        raise ValueError(
            f"{args.values}: ids {missing[:5]} not present in {args.data}"
        )
    train_set = subset(ds, sorted(id_to_pos[i] for i in ids))
    if len(train_set) < _FIGURE_K:
        raise ValueError(f"figure export requires at least {_FIGURE_K} training tuples")

    svm = train(default_spec(ModelKind.LINEAR_SVM), train_set)
    sv_ids = support_vectors(svm, train_set)
    highest = set(rank_topk(values, ids, _FIGURE_K, SelectionDirection.HIGHEST))
    lowest = set(rank_topk(values, ids, _FIGURE_K, SelectionDirection.LOWEST))

    row_of = {int(tid): pos for pos, tid in enumerate(train_set.ids)}
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["id", "x1", "x2", "label", "is_support_vector", "in_highest10", "in_lowest10"])
    for tid in ids:
        pos = row_of[tid]
        x = train_set.features[pos]
        writer.writerow([
            tid,
            repr(float(x[0])),
            repr(float(x[1])),
            int(train_set.labels[pos]),
            int(tid in sv_ids),
            int(tid in highest),
            int(tid in lowest),
        ])

    config = {
        "values": args.values,
        "mode": doc.get("mode"),
        "data": args.data,
        "label_col": args.label_col,
        "iris_2d": args.iris_2d,
    }
    argv = ["export-figure", "--values", args.values, "--data", args.data,
            "--label-col", args.label_col]
    if args.mode:
        argv += ["--mode", args.mode]
    if args.iris_2d:
        argv.append("--iris-2d")
    if args.out:
        argv += ["--out", args.out]
    _emit(buffer.getvalue(), args, _manifest("export-figure", argv, config, started))
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError, RuntimeError, json.JSONDecodeError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entry_point() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    entry_point()

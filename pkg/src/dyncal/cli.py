"""Command-line entry point: ``dyncal {ingest,windows,synth,run,report}``.

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 training failure.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import json
import logging
import sys
import time
from collections import defaultdict
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from . import __version__
from .experiment import (
    ConfigError,
    ExperimentConfig,
    ExperimentError,
    run_experiment,
    write_cell_manifest,
    write_results_csv,
    write_summary_json,
)
from .ingestion import (
    PROFILES,
    ColumnMapping,
    FilterReport,
    IngestError,
    canonicalize,
    filter_goodreads,
    label_by_threshold,
    load_dataset,
    parse_interactions,
    read_categories,
    write_dataset,
    write_rejects,
)
from .metrics import MetricConfig
from .model import EmptyInputError, dataset_stats, validate
from .recommenders import BprHyperparams
from .segmentation import write_assignments
from .synthetic import DriftSpec, generate_drift_dataset, write_truth
from .windowing import WindowSpec, parse_duration, window_grid, write_window_grid

logger = logging.getLogger("dyncal")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_TRAIN = 0, 1, 2, 3


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def sha256(path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


class Manifest:
    """Run record: config echo, input digests, tool version, stage timings, outputs."""

    def __init__(self, command: str, config: dict, inputs: list[Path]):
        self.command = command
        self.config = config
        self.inputs = {str(p): sha256(p) for p in inputs}
        self.stages: dict[str, float] = {}
        self.outputs: dict[str, str] = {}
        self._t = time.perf_counter()

    def stage(self, name: str) -> None:
        now = time.perf_counter()
        self.stages[name] = round(now - self._t, 6)
        self._t = now

    def write(self, path: Path) -> None:
        for p, digest in self.inputs.items():
            if sha256(p) != digest:
                raise DataError(f"input {p} changed during the run")
        data = {
            "command": self.command,
            "tool_version": __version__,
            "config": self.config,
            "inputs": self.inputs,
            "outputs": {k: {"path": v, "sha256": sha256(v)} for k, v in sorted(self.outputs.items())},
            "stage_seconds": self.stages,
        }
        path.write_text(json.dumps(data, indent=2, sort_keys=True, default=str) + "\n")


# -- ingest -----------------------------------------------------------------


def cmd_ingest(args) -> int:
    if not args.categories:
        raise UsageError("--categories is required (path to the item_id,categories CSV)")
    if not args.interactions:
        raise UsageError("--interactions is required")
    spec = PROFILES[args.profile]
    threshold = args.threshold if args.threshold is not None else spec.signal_threshold
    if args.profile == "kuairec" and args.signal_col is None:
        args.signal_col = "watch_ratio"
    inputs = [Path(args.interactions), Path(args.categories)]
    for p in inputs:
        if not p.is_file():
            raise DataError(f"input file not found: {p}")
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    echo = {k: v for k, v in vars(args).items() if k != "func"}
    manifest = Manifest("ingest", {**echo, "filter_spec": asdict(spec), "threshold": threshold}, inputs)

    mapping = ColumnMapping(args.user_col, args.item_col, args.time_col, args.label_col, args.signal_col)
    parsed = parse_interactions(args.interactions, mapping)
    write_rejects(parsed.rejects, out / "rejects.csv")
    manifest.outputs["rejects"] = str(out / "rejects.csv")
    manifest.stage("parse")
    records = parsed.records
    if threshold is not None:
        records = label_by_threshold(records, threshold)
    report = FilterReport()
    records = filter_goodreads(records, replace(spec, signal_threshold=threshold), report=report)
    (out / "filter_report.json").write_text(
        json.dumps({"stages": report.stages, "warnings": report.warnings}, indent=2) + "\n"
    )
    manifest.outputs["filter_report"] = str(out / "filter_report.json")
    manifest.stage("filter")
    if not records:
        raise DataError("no interactions survived filtering; see filter_report.json")
    dataset = canonicalize(records, read_categories(args.categories))
    problems = validate(dataset)
    if problems:
        raise DataError(f"canonical dataset has {len(problems)} violation(s), e.g. {problems[0]}")
    paths = write_dataset(dataset, out / "dataset")
    manifest.outputs.update({f"dataset_{k}": str(v) for k, v in paths.items()})
    stats = dataset_stats(dataset)
    with (out / "stats.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["n_users", "n_items", "n_categories", "n_interactions", "sparsity"])
        w.writerow([stats.n_users, stats.n_items, stats.n_categories, stats.n_interactions, repr(stats.sparsity)])
    manifest.outputs["stats"] = str(out / "stats.csv")
    manifest.stage("canonicalize")
    manifest.write(out / "manifest.json")
    print(
        f"{stats.n_users} users, {stats.n_items} items, {stats.n_categories} categories, "
        f"{stats.n_interactions} positive pairs, sparsity {stats.sparsity:.1%}; "
        f"{len(parsed.rejects)} rejected rows"
    )
    return EXIT_OK


# -- windows ----------------------------------------------------------------


def cmd_windows(args) -> int:
    dataset = _load(args.dataset)
    rows = window_grid(dataset, args.widths, anchor=args.anchor)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_window_grid(rows, out)
    for r in rows:
        print(f"width={r.width:g}s n={r.n} empty={r.empty_fraction:.3f} median={r.median_cell:g}")
    return EXIT_OK


# -- synth ------------------------------------------------------------------


def cmd_synth(args) -> int:
    try:
        spec = DriftSpec(
            n_users=args.users,
            n_items=args.items,
            n_categories=args.categories,
            windows=args.windows,
            shift_at=args.shift_at,
            pre_concentration=args.pre_conc,
            post_concentration=args.post_conc,
            interactions_per_window=args.per_window,
            mode=args.mode,
            width=parse_duration(args.width),
            anchor=args.anchor,
            seed=args.seed,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    out = Path(args.out_dir)
    manifest = Manifest("synth", asdict(spec), [])
    dataset, truth = generate_drift_dataset(spec)
    manifest.stage("generate")
    paths = write_dataset(dataset, out)
    write_truth(truth, out / "truth.json")
    manifest.outputs.update({k: str(v) for k, v in paths.items()})
    manifest.outputs["truth"] = str(out / "truth.json")
    manifest.stage("write")
    manifest.write(out / "manifest.json")
    print(f"wrote {len(dataset)} interactions for {dataset.n_users} users to {out}")
    return EXIT_OK


# -- run --------------------------------------------------------------------

_RUN_KEYS = {
    "width": str, "anchor": int, "levels": int, "holdout": float, "min_train": int, "min_test": int,
    "reps": int, "seed_list": str, "grid_lr": str, "grid_dim": str, "grid_knn": str, "epochs": int,
    "l2_reg": float, "alpha": float, "reference_mode": str, "algo": str, "jobs": int, "k": int,
    "prefer_observed_negatives": lambda s: s.strip().lower() in ("1", "true", "yes", "on"),
    "backend": str,
}


def _read_config(path) -> dict:
    cp = configparser.ConfigParser()
    if not cp.read(path):
        raise UsageError(f"cannot read config file {path}")
    if "run" not in cp:
        raise UsageError(f"{path}: missing [run] section")
    out = {}
    for key, raw in cp["run"].items():
        key = key.replace("-", "_")
        if key not in _RUN_KEYS:
            raise UsageError(f"{path}: unknown key {key!r}")
        try:
            out[key] = _RUN_KEYS[key](raw)
        except ValueError as exc:
            raise UsageError(f"{path}: bad value for {key}: {raw!r}") from exc
    return out


def _csv_list(text: str, kind):
    try:
        return tuple(kind(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise UsageError(f"cannot parse list {text!r}") from None


def build_run_config(args) -> ExperimentConfig:
    opts = _read_config(args.config) if args.config else {}
    opts.update({k: v for k, v in vars(args).items() if k in _RUN_KEYS and v is not None})
    problems = []
    if "width" not in opts:
        problems.append("--width is required (e.g. 1d, 6mo)")
    reps = opts.get("reps")
    seeds = _csv_list(opts["seed_list"], int) if "seed_list" in opts else None
    if seeds is None:
        seeds = tuple(range(reps if reps is not None else 6))
    bpr = BprHyperparams(
        epochs=opts.get("epochs", BprHyperparams.epochs),
        l2_reg=opts.get("l2_reg", BprHyperparams.l2_reg),
        prefer_observed_negatives=opts.get("prefer_observed_negatives", False),
    )
    kwargs = dict(
        levels=opts.get("levels"),
        holdout_fraction=opts.get("holdout", 0.2),
        min_train=opts.get("min_train", 5),
        min_test=opts.get("min_test", 1),
        seeds=seeds,
        repetitions=reps if reps is not None else len(seeds),
        algo=opts.get("algo", "bpr"),
        bpr=bpr,
        reference_mode=opts.get("reference_mode", "sample-profile"),
        jobs=opts.get("jobs", 1),
        backend=opts.get("backend"),
    )
    for key, name, kind in (("grid_lr", "lr_grid", float), ("grid_dim", "dim_grid", int), ("grid_knn", "knn_grid", int)):
        if key in opts:
            kwargs[name] = _csv_list(opts[key], kind)
    try:
        kwargs["metric"] = MetricConfig(opts.get("alpha", 0.01), opts.get("k", 10))
    except ValueError as exc:
        problems.append(str(exc))
    window = None
    if "width" in opts:
        try:
            window = WindowSpec(parse_duration(opts["width"]), anchor=opts.get("anchor"))
        except ValueError as exc:
            problems.append(str(exc))
    if problems:
        raise ConfigError(problems)
    cfg = ExperimentConfig(window=window, **kwargs)
    if cfg.problems():
        raise ConfigError(cfg.problems())
    return cfg


def _load(directory):
    d = Path(directory)
    if not (d / "interactions.csv").is_file():
        raise DataError(f"no canonical dataset in {d} (expected interactions.csv)")
    try:
        return load_dataset(d)
    except (IngestError, EmptyInputError) as exc:
        raise DataError(str(exc)) from exc


def cmd_run(args) -> int:
    cfg = build_run_config(args)
    data_dir = Path(args.dataset)
    dataset = _load(data_dir)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    inputs = [data_dir / "interactions.csv", data_dir / "categories.csv"]
    if args.config:
        inputs.append(Path(args.config))
    manifest = Manifest("run", cfg.to_dict(), inputs)
    manifest.stage("load")

    def persist(result, status):
        write_results_csv(result, out / "results.csv", dataset.user_keys)
        write_cell_manifest(result, out / "cells.json", status)
        manifest.outputs["results"] = str(out / "results.csv")
        manifest.outputs["cells"] = str(out / "cells.json")
        if status == "complete":
            write_summary_json(result, out / "summary.json")
            manifest.outputs["summary"] = str(out / "summary.json")
            if result.assignments:
                write_assignments(
                    [result.assignments[u] for u in sorted(result.assignments)],
                    out / "segments.csv",
                    dataset.user_keys,
                )
                manifest.outputs["segments"] = str(out / "segments.csv")
        manifest.stage("write")
        manifest.write(out / "manifest.json")

    try:
        result = run_experiment(dataset, cfg)
    except ExperimentError as exc:
        manifest.stage("experiment")
        persist(exc.partial, "failed")
        print(f"experiment failed: {exc}", file=sys.stderr)
        return EXIT_TRAIN
    manifest.stage("experiment")
    persist(result, "complete")
    print(f"argmin-miscalibration level: {result.argmin_level()}")
    for lv, s in result.level_stats().items():
        mc, nd = s["miscalibration"], s["ndcg"]
        if mc is not None:
            print(
                f"level {lv}: miscalibration median {mc.median:.4f} "
                f"[q1 {mc.q1:.4f}, q3 {mc.q3:.4f}] mean {mc.mean:.4f}; ndcg@{cfg.metric.k} mean {nd.mean:.4f}"
            )
    return EXIT_OK


# -- report -----------------------------------------------------------------

_STATS = ("n", "mean", "median", "q1", "q3", "min", "max")


def _describe(values) -> dict:
    v = np.asarray(values, dtype=np.float64)
    q1, med, q3 = np.percentile(v, [25, 50, 75])
    return {"n": v.size, "mean": v.mean(), "median": med, "q1": q1, "q3": q3, "min": v.min(), "max": v.max()}


def cmd_report(args) -> int:
    results = Path(args.results) / "results.csv"
    if not results.is_file():
        raise DataError(f"results file not found: {results}")
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    pools: dict[tuple[str, int], dict[str, list[float]]] = defaultdict(lambda: {"miscalibration": [], "ndcg": []})
    with results.open(newline="") as fh:
        for row in csv.DictReader(fh):
            lv = int(row["level"])
            keys = ["all"]
            if row["activity_segment"]:
                keys.append(f"activity:{row['activity_segment']}")
            if row["entropy_segment"]:
                keys.append(f"entropy:{row['entropy_segment']}")
            for seg in keys:
                for metric in ("miscalibration", "ndcg"):
                    pools[(seg, lv)][metric].append(float(row[metric]))

    def write(path, want):
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["level", "segment", "statistic", "value"])
            for seg, lv in sorted(k for k in pools if want(k[0])):
                for metric, vals in pools[(seg, lv)].items():
                    for stat, value in _describe(vals).items():
                        w.writerow([lv, seg, f"{metric}_{stat}", repr(float(value))])

    write(out / "window_report.csv", lambda s: s == "all")
    write(out / "segment_report.csv", lambda s: s != "all")
    print(f"wrote {out / 'window_report.csv'} and {out / 'segment_report.csv'}")
    return EXIT_OK


# -- parser -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="dyncal", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    p.add_argument("--version", action="version", version=f"dyncal {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    ing = sub.add_parser("ingest", help="parse, filter and canonicalize raw logs")
    ing.add_argument("--interactions", help="interaction CSV")
    ing.add_argument("--categories", help="item_id,categories CSV (pipe-delimited categories)")
    ing.add_argument("--profile", choices=sorted(PROFILES), default="generic")
    ing.add_argument("--threshold", type=float, help="positive-label cutoff on the signal column")
    ing.add_argument("--user-col", default="user_id")
    ing.add_argument("--item-col", default="item_id")
    ing.add_argument("--time-col", default="timestamp")
    ing.add_argument("--label-col")
    ing.add_argument("--signal-col")
    ing.add_argument("--out-dir", required=True)
    ing.set_defaults(func=cmd_ingest)

    win = sub.add_parser("windows", help="summarize candidate window widths")
    win.add_argument("--dataset", required=True)
    win.add_argument("--widths", nargs="+", required=True, help="e.g. 1d 7d 14d")
    win.add_argument("--anchor", type=int)
    win.add_argument("--out", required=True)
    win.set_defaults(func=cmd_windows)

    syn = sub.add_parser("synth", help="generate a dataset with a planted preference shift")
    d = DriftSpec()
    syn.add_argument("--users", type=int, default=d.n_users)
    syn.add_argument("--items", type=int, default=d.n_items)
    syn.add_argument("--categories", type=int, default=d.n_categories)
    syn.add_argument("--windows", type=int, default=d.windows)
    syn.add_argument("--shift-at", type=int, default=d.shift_at)
    syn.add_argument("--pre-conc", type=float, default=d.pre_concentration)
    syn.add_argument("--post-conc", type=float, default=d.post_concentration)
    syn.add_argument("--per-window", type=int, default=d.interactions_per_window)
    syn.add_argument("--mode", choices=("orthogonal", "independent", "none"), default=d.mode)
    syn.add_argument("--width", default="1d")
    syn.add_argument("--anchor", type=int, default=d.anchor)
    syn.add_argument("--seed", type=int, default=d.seed)
    syn.add_argument("--out-dir", required=True)
    syn.set_defaults(func=cmd_synth)

    run = sub.add_parser("run", help="run the windowed calibration experiment")
    run.add_argument("--dataset", required=True, help="directory written by ingest/synth")
    run.add_argument("--config", help="INI file with a [run] section; flags override it")
    run.add_argument("--width")
    run.add_argument("--anchor", type=int)
    run.add_argument("--levels", type=int)
    run.add_argument("--holdout", type=float)
    run.add_argument("--min-train", type=int)
    run.add_argument("--min-test", type=int)
    run.add_argument("--reps", type=int)
    run.add_argument("--seed-list")
    run.add_argument("--grid-lr")
    run.add_argument("--grid-dim")
    run.add_argument("--grid-knn")
    run.add_argument("--epochs", type=int)
    run.add_argument("--l2-reg", type=float)
    run.add_argument("--alpha", type=float)
    run.add_argument("--k", type=int)
    run.add_argument("--reference-mode", choices=("sample-profile", "recent-window"))
    run.add_argument("--algo", choices=("bpr", "itemknn"))
    run.add_argument("--prefer-observed-negatives", action="store_const", const=True)
    run.add_argument("--backend", choices=("cython", "python"))
    run.add_argument("--jobs", type=int)
    run.add_argument("--out-dir", required=True)
    run.set_defaults(func=cmd_run)

    rep = sub.add_parser("report", help="plot-ready per-level and per-segment statistics")
    rep.add_argument("--results", required=True, help="directory holding results.csv")
    rep.add_argument("--out-dir", required=True)
    rep.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, IngestError, EmptyInputError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())

"""End-to-end calibration experiment over cumulative temporal samples.

For every level ``l`` the sample built from windows ``1..l`` is split per user
into train/test by recency, hyperparameters are tuned once, and one model per
seed is trained and evaluated. Per-user miscalibration and NDCG@k are pooled
into box-plot statistics per level and per user segment.
"""
from __future__ import annotations

import csv
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .metrics import MetricConfig, miscalibration, ndcg_at_k, profile_distribution, recommendation_distribution
from .model import CategoryDistribution, Dataset, validate
from .recommenders import (
    BprHyperparams,
    TrainSet,
    grid_search_bpr,
    grid_search_itemknn,
    top_k_many,
    train_bpr,
    train_itemknn,
)
from .recommenders.tuning import DEFAULT_DIM_GRID, DEFAULT_KNN_GRID, DEFAULT_LR_GRID, GridResult
from .segmentation import SEGMENTS, SegmentationError, UserSegmentAssignment, assign_segments
from .windowing import TemporalSample, WindowSpec, build_samples, split_profiles

logger = logging.getLogger(__name__)

REFERENCE_MODES = ("sample-profile", "recent-window")
ALGORITHMS = ("bpr", "itemknn")
SEGMENT_FACTORS = ("activity", "entropy")


class ConfigError(ValueError):
    def __init__(self, problems: Sequence[str]):
        self.problems = list(problems)
        super().__init__("invalid experiment config:\n  " + "\n  ".join(self.problems))


class LeakError(AssertionError):
    """A recommendation list contains one of the user's training items."""


class ExperimentError(RuntimeError):
    def __init__(self, message: str, partial: "ExperimentResult"):
        super().__init__(message)
        self.partial = partial


@dataclass(frozen=True)
class ExperimentConfig:
    window: WindowSpec
    levels: int | None = None
    holdout_fraction: float = 0.2
    min_train: int = 5
    min_test: int = 1
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4, 5)
    repetitions: int | None = None
    algo: str = "bpr"
    lr_grid: tuple[float, ...] = DEFAULT_LR_GRID
    dim_grid: tuple[int, ...] = DEFAULT_DIM_GRID
    knn_grid: tuple[int, ...] = DEFAULT_KNN_GRID
    bpr: BprHyperparams = field(default_factory=BprHyperparams)
    metric: MetricConfig = field(default_factory=MetricConfig)
    reference_mode: str = "sample-profile"
    jobs: int = 1
    backend: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        if self.repetitions is None:
            object.__setattr__(self, "repetitions", len(self.seeds))

    def problems(self) -> list[str]:
        out = []
        if self.repetitions != len(self.seeds):
            out.append(f"repetitions ({self.repetitions}) must equal the number of seeds ({len(self.seeds)})")
        if len(set(self.seeds)) != len(self.seeds):
            out.append("seeds must be distinct")
        if not self.seeds:
            out.append("at least one seed is required")
        if not 0.0 < self.holdout_fraction < 1.0:
            out.append(f"holdout_fraction must be in (0, 1), got {self.holdout_fraction}")
        if self.min_train < 1 or self.min_test < 1:
            out.append("min_train and min_test must be >= 1")
        if self.levels is not None and self.levels < 1:
            out.append("levels must be >= 1")
        if self.algo not in ALGORITHMS:
            out.append(f"algo must be one of {ALGORITHMS}, got {self.algo!r}")
        if self.reference_mode not in REFERENCE_MODES:
            out.append(f"reference_mode must be one of {REFERENCE_MODES}, got {self.reference_mode!r}")
        if self.algo == "bpr" and (not self.lr_grid or not self.dim_grid):
            out.append("BPR grid must have at least one learning rate and one embedding size")
        if any(lr <= 0 for lr in self.lr_grid):
            out.append("grid learning rates must be > 0")
        if any(d < 1 for d in self.dim_grid):
            out.append("grid embedding sizes must be >= 1")
        if self.algo == "itemknn" and (not self.knn_grid or any(k < 1 for k in self.knn_grid)):
            out.append("ItemKNN grid must be non-empty with k >= 1")
        if self.jobs < 1:
            out.append("jobs must be >= 1")
        return out

    def to_dict(self) -> dict:
        d = asdict(self)
        d["seeds"] = list(self.seeds)
        return d


# -- train/test split -------------------------------------------------------


@dataclass(frozen=True)
class Split:
    """Per-user recency split of a sample's deduplicated positives."""

    n_users: int
    n_items: int
    train_users: np.ndarray
    train_items: np.ndarray
    train_times: np.ndarray
    test: Mapping[int, frozenset]
    eligible: tuple[int, ...]
    excluded: Mapping[int, str]
    negative_pairs: np.ndarray | None = None

    def train_set(self) -> TrainSet:
        return TrainSet(
            self.n_users,
            self.n_items,
            np.stack([self.train_users, self.train_items], axis=1),
            self.negative_pairs,
        )

    def resplit(self, holdout_fraction: float, min_train: int, min_test: int) -> "Split":
        """Split the training part again, e.g. to carve out validation items."""
        return _split_arrays(
            self.n_users, self.n_items, self.train_users, self.train_items, self.train_times,
            holdout_fraction, min_train, min_test, self.negative_pairs,
        )


def _latest_positives(data: Dataset) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    pos = data.labels == 1
    u, i, t = data.users[pos], data.items[pos], data.timestamps[pos]
    if len(u) == 0:
        return u, i, t
    # per (user, item) keep the newest event
    order = np.lexsort((-t, i, u))
    u, i, t = u[order], i[order], t[order]
    first = np.ones(len(u), dtype=bool)
    first[1:] = (u[1:] != u[:-1]) | (i[1:] != i[:-1])
    return u[first], i[first], t[first]


def _split_arrays(n_users, n_items, u, i, t, fraction, min_train, min_test, negatives) -> Split:
    # newest first, ties by ascending item id
    order = np.lexsort((i, -t, u))
    u, i, t = u[order], i[order], t[order]
    bounds = np.searchsorted(u, np.arange(n_users + 1))
    is_test = np.zeros(len(u), dtype=bool)
    test, eligible, excluded = {}, [], {}
    for user in range(n_users):
        lo, hi = bounds[user], bounds[user + 1]
        n = hi - lo
        if n == 0:
            continue
        n_test = math.ceil(fraction * n)
        n_train = n - n_test
        if n_test < min_test or n_train < min_train:
            excluded[user] = f"{n} positives: {n_train} train / {n_test} test below minimum ({min_train}/{min_test})"
            continue
        is_test[lo:lo + n_test] = True
        test[user] = frozenset(i[lo:lo + n_test].tolist())
        eligible.append(user)
    keep = ~is_test
    return Split(n_users, n_items, u[keep], i[keep], t[keep], test, tuple(eligible), excluded, negatives)


def temporal_split(sample: TemporalSample | Dataset, holdout_fraction: float = 0.2, min_train: int = 5, min_test: int = 1) -> Split:
    """Hold out each user's most recent ``ceil(fraction * |positives|)`` positives.

    Users below ``min_train``/``min_test`` are excluded from evaluation but all
    of their positives stay in the training set.
    """
    data = sample.data if isinstance(sample, TemporalSample) else sample
    u, i, t = _latest_positives(data)
    neg = data.labels == 0
    negatives = np.stack([data.users[neg], data.items[neg]], axis=1)
    return _split_arrays(data.n_users, data.n_items, u, i, t, holdout_fraction, min_train, min_test, negatives)


# -- per-level evaluation ---------------------------------------------------


@dataclass(frozen=True)
class LevelData:
    sample: TemporalSample
    split: Split
    reference: Mapping[int, CategoryDistribution]
    eligible: tuple[int, ...]


def prepare_level(sample: TemporalSample, config: ExperimentConfig) -> LevelData:
    split = temporal_split(sample, config.holdout_fraction, config.min_train, config.min_test)
    catalog = sample.dataset.catalog
    ts = split.train_set()
    if config.reference_mode == "sample-profile":
        reference = {u: profile_distribution(ts.user_items(u), catalog) for u in split.eligible}
    else:
        data = sample.dataset
        rows = sample.window_rows(1)
        rows = rows[data.labels[rows] == 1]
        recent: dict[int, list[int]] = {}
        for user, item in zip(data.users[rows].tolist(), data.items[rows].tolist()):
            recent.setdefault(user, []).append(item)
        reference = {
            u: profile_distribution(np.unique(recent.get(u, [])), catalog) for u in split.eligible
        }
    eligible = tuple(u for u in split.eligible if not reference[u].empty)
    return LevelData(sample, split, reference, eligible)


def tune_level(level: LevelData, config: ExperimentConfig) -> GridResult:
    val = level.split.resplit(config.holdout_fraction, config.min_train, config.min_test)
    fit = val.train_set()
    validation = {u: val.test[u] for u in val.eligible}
    k = config.metric.k
    if config.algo == "itemknn":
        return grid_search_itemknn(fit, validation, config.knn_grid, k=k)
    base = replace(config.bpr, seed=config.seeds[0])
    return grid_search_bpr(fit, validation, base, config.lr_grid, config.dim_grid, k=k, backend=config.backend)


def train_model(train: TrainSet, params: Mapping, seed: int, config: ExperimentConfig, level: int | None = None):
    if config.algo == "itemknn":
        return train_itemknn(train, params["k_neighbors"], level=level)
    return train_bpr(train, replace(config.bpr, seed=seed, **params), level=level, backend=config.backend)


@dataclass(frozen=True)
class Stats:
    n: int
    mean: float
    median: float
    q1: float
    q3: float
    min: float
    max: float
    std: float

    @classmethod
    def of(cls, values: Sequence[float]) -> "Stats | None":
        v = np.asarray(values, dtype=np.float64)
        if v.size == 0:
            return None
        q1, med, q3 = np.percentile(v, [25, 50, 75])
        return cls(int(v.size), float(v.mean()), float(med), float(q1), float(q3), float(v.min()), float(v.max()), float(v.std()))


@dataclass(frozen=True)
class CellResult:
    level: int
    repetition: int
    seed: int
    params: Mapping
    miscalibration: Mapping[int, float]
    ndcg: Mapping[int, float]

    @property
    def mc_stats(self) -> Stats | None:
        return Stats.of([self.miscalibration[u] for u in sorted(self.miscalibration)])

    @property
    def ndcg_stats(self) -> Stats | None:
        return Stats.of([self.ndcg[u] for u in sorted(self.ndcg)])


def evaluate_recommendations(level: LevelData, recs, metric: MetricConfig) -> tuple[dict, dict]:
    """Per-user miscalibration and NDCG for lists in ``recs`` (user -> list)."""
    catalog = level.sample.dataset.catalog
    ts = level.split.train_set()
    mc, nd = {}, {}
    for u in level.eligible:
        rec = recs[u]
        leaked = set(rec.items) & set(ts.user_items(u).tolist())
        if leaked:
            raise LeakError(f"user {u}: recommended training items {sorted(leaked)}")
        if len(rec) == 0:
            continue
        q = recommendation_distribution(rec, catalog)
        mc[u] = miscalibration(level.reference[u], q, metric)
        nd[u] = ndcg_at_k(rec, level.split.test[u], metric.k)
    return mc, nd


def run_level(level: LevelData, params: Mapping, config: ExperimentConfig, seed: int, repetition: int = 0) -> CellResult:
    ts = level.split.train_set()
    model = train_model(ts, params, seed, config, level.sample.level)
    users = [u for u in level.eligible if model.knows_user(u)]
    recs = top_k_many(model, users, ts.items(), ts, config.metric.k)
    level = replace(level, eligible=tuple(users))
    mc, nd = evaluate_recommendations(level, recs, config.metric)
    return CellResult(level.sample.level, repetition, seed, dict(params), mc, nd)


# -- aggregation ------------------------------------------------------------


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    n_levels: int
    anchor: int
    cells: dict[tuple[int, int], CellResult] = field(default_factory=dict)
    tuning: dict[int, GridResult] = field(default_factory=dict)
    assignments: dict[int, UserSegmentAssignment] | None = None

    def sorted_cells(self) -> list[CellResult]:
        return [self.cells[k] for k in sorted(self.cells)]

    def level_stats(self) -> dict[int, dict]:
        return aggregate(self.sorted_cells())

    def argmin_level(self) -> int | None:
        return argmin_level(self.level_stats())

    def repetition_argmins(self) -> dict[int, int]:
        """Per repetition: level with the lowest mean miscalibration."""
        out = {}
        for rep in sorted({c.repetition for c in self.cells.values()}):
            means = {
                c.level: c.mc_stats.mean
                for c in self.sorted_cells()
                if c.repetition == rep and c.mc_stats is not None
            }
            if means:
                out[rep] = min(means, key=lambda lv: (means[lv], lv))
        return out

    def segment_stats(self) -> dict | None:
        if self.assignments is None:
            return None
        return aggregate_by_segment(self.sorted_cells(), self.assignments)


def aggregate(cells: Sequence[CellResult], users: set | None = None) -> dict[int, dict]:
    """Box-plot statistics per level, pooling per-user values across repetitions.

    ``users`` restricts the pool; a level with no values gets ``None`` stats.
    """
    by_level: dict[int, list[CellResult]] = {}
    for c in sorted(cells, key=lambda c: (c.level, c.repetition)):
        by_level.setdefault(c.level, []).append(c)
    out = {}
    for lv, group in by_level.items():
        mc, nd, per_rep = [], [], {}
        for c in group:
            us = [u for u in sorted(c.miscalibration) if users is None or u in users]
            vals = [c.miscalibration[u] for u in us]
            mc.extend(vals)
            nd.extend(c.ndcg[u] for u in us)
            per_rep[c.repetition] = float(np.mean(vals)) if vals else None
        out[lv] = {
            "miscalibration": Stats.of(mc),
            "ndcg": Stats.of(nd),
            "repetition_mean_miscalibration": per_rep,
        }
    return out


def argmin_level(stats: Mapping[int, dict]) -> int | None:
    means = {lv: s["miscalibration"].mean for lv, s in stats.items() if s["miscalibration"] is not None}
    if not means:
        return None
    return min(means, key=lambda lv: (means[lv], lv))


def aggregate_by_segment(cells: Sequence[CellResult], assignments: Mapping[int, UserSegmentAssignment]) -> dict:
    """``{factor: {segment: {"levels": stats-by-level, "argmin_level": int|None}}}``."""
    evaluated = {u for c in cells for u in c.miscalibration}
    missing = evaluated - set(assignments)
    if missing:
        raise ValueError(f"{len(missing)} evaluated user(s) have no segment assignment")
    out = {}
    for factor in SEGMENT_FACTORS:
        attr = f"{factor}_segment"
        out[factor] = {}
        for seg in SEGMENTS:
            members = {u for u, a in assignments.items() if getattr(a, attr) == seg}
            stats = aggregate(cells, members)
            out[factor][seg] = {"levels": stats, "argmin_level": argmin_level(stats)}
    return out


# -- orchestration ----------------------------------------------------------


def _map(fn: Callable, items: Sequence, jobs: int) -> list:
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def run_experiment(dataset: Dataset, config: ExperimentConfig, *, on_cell: Callable[[CellResult], None] | None = None) -> ExperimentResult:
    problems = config.problems()
    violations = validate(dataset)
    problems += [f"dataset: {v.kind} at {v.location}" for v in violations[:20]]
    if problems:
        raise ConfigError(problems)

    sub = split_profiles(dataset, config.window)
    n = sub.n if config.levels is None else min(sub.n, config.levels)
    samples = build_samples(sub, n)
    result = ExperimentResult(config, n, sub.anchor)
    try:
        result.assignments = {a.user: a for a in assign_segments(dataset)}
    except SegmentationError as exc:
        logger.warning("segmentation skipped: %s", exc)

    levels = [prepare_level(s, config) for s in samples]
    try:
        tunings = _map(lambda lv: tune_level(lv, config), levels, config.jobs)
    except Exception as exc:
        raise ExperimentError(f"tuning failed: {exc}", result) from exc
    for lv, gr in zip(levels, tunings):
        result.tuning[lv.sample.level] = gr
        logger.info("level %d: chose %s (ndcg %.4f)", lv.sample.level, gr.best, gr.best_score)

    jobs = [(lv, rep, seed) for lv in levels for rep, seed in enumerate(config.seeds)]

    def run(job):
        lv, rep, seed = job
        cell = run_level(lv, result.tuning[lv.sample.level].best, config, seed, rep)
        result.cells[(cell.level, cell.repetition)] = cell
        if on_cell is not None:
            on_cell(cell)
        return cell

    try:
        _map(run, jobs, config.jobs)
    except Exception as exc:
        raise ExperimentError(f"experiment cell failed: {exc}", result) from exc
    return result


# -- reporting --------------------------------------------------------------

RESULT_HEADER = ["level", "repetition", "user", "miscalibration", "ndcg", "activity_segment", "entropy_segment"]


def _num(x: float) -> str:
    return repr(float(x))


def write_results_csv(result: ExperimentResult, path, user_keys: Sequence[str] | None = None) -> None:
    assign = result.assignments or {}
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RESULT_HEADER)
        for c in result.sorted_cells():
            for u in sorted(c.miscalibration):
                a = assign.get(u)
                w.writerow([
                    c.level, c.repetition, user_keys[u] if user_keys else u,
                    _num(c.miscalibration[u]), _num(c.ndcg[u]),
                    a.activity_segment if a else "", a.entropy_segment if a else "",
                ])


def _stats_json(stats: Mapping[int, dict]) -> dict:
    return {
        str(lv): {
            "miscalibration": asdict(s["miscalibration"]) if s["miscalibration"] else None,
            "ndcg": asdict(s["ndcg"]) if s["ndcg"] else None,
            "repetition_mean_miscalibration": {str(r): m for r, m in s["repetition_mean_miscalibration"].items()},
        }
        for lv, s in stats.items()
    }


def summary_json(result: ExperimentResult) -> dict:
    seg = result.segment_stats()
    return {
        "n_levels": result.n_levels,
        "anchor": result.anchor,
        "argmin_level": result.argmin_level(),
        "repetition_argmin_levels": {str(r): lv for r, lv in result.repetition_argmins().items()},
        "levels": _stats_json(result.level_stats()),
        "segments": None if seg is None else {
            factor: {
                s: {"argmin_level": v["argmin_level"], "levels": _stats_json(v["levels"])}
                for s, v in segs.items()
            }
            for factor, segs in seg.items()
        },
        "chosen_hyperparams": {str(lv): gr.best for lv, gr in sorted(result.tuning.items())},
        "tuning_trace": {
            str(lv): [{"params": t.params, "score": t.score, "error": t.error} for t in gr.trace]
            for lv, gr in sorted(result.tuning.items())
        },
        "seeds": list(result.config.seeds),
        "config": result.config.to_dict(),
    }


def write_summary_json(result: ExperimentResult, path) -> None:
    Path(path).write_text(json.dumps(summary_json(result), indent=2, sort_keys=True, default=str) + "\n")


def write_cell_manifest(result: ExperimentResult, path, status: str) -> None:
    data = {
        "status": status,
        "expected_cells": result.n_levels * len(result.config.seeds),
        "completed_cells": [
            {"level": lv, "repetition": rep, "seed": result.cells[(lv, rep)].seed}
            for lv, rep in sorted(result.cells)
        ],
    }
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")

"""Interaction data with a planted, piecewise-stationary preference shift.

Each synthetic item has exactly one category. Every user carries a pre-shift
and a post-shift category preference; windows ``1..shift_at`` (newest first)
draw from the post-shift preference and older windows from the pre-shift one.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .model import CategoryCatalog, Dataset
from .windowing import DAY

DRIFT_MODES = ("orthogonal", "independent", "none")


@dataclass(frozen=True)
class DriftSpec:
    n_users: int = 200
    n_items: int = 500
    n_categories: int = 10
    windows: int = 8
    shift_at: int = 3
    pre_concentration: float = 1.0
    post_concentration: float = 1.0
    interactions_per_window: int = 10
    # orthogonal: disjoint category supports; independent: both over all
    # categories; none: post-shift preference equals pre-shift
    mode: str = "orthogonal"
    width: float = DAY
    anchor: int = 1_600_000_000
    seed: int = 0

    def __post_init__(self):
        for name in ("n_users", "n_items", "n_categories", "windows", "interactions_per_window"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if not 1 <= self.shift_at <= self.windows:
            raise ValueError(f"shift_at must be in [1, {self.windows}], got {self.shift_at}")
        if self.n_categories > self.n_items:
            raise ValueError("n_categories cannot exceed n_items")
        if self.mode not in DRIFT_MODES:
            raise ValueError(f"mode must be one of {DRIFT_MODES}")
        if self.mode == "orthogonal" and self.n_categories < 2:
            raise ValueError("orthogonal drift needs at least 2 categories")
        if self.pre_concentration <= 0 or self.post_concentration <= 0:
            raise ValueError("concentrations must be > 0")
        if self.width <= 0 or self.anchor <= self.windows * self.width:
            raise ValueError("anchor must leave all windows at positive timestamps")


@dataclass(frozen=True)
class DriftTruth:
    spec: DriftSpec
    pre: np.ndarray  # n_users x W
    post: np.ndarray
    item_category: np.ndarray

    def to_json(self) -> dict:
        return {
            "spec": asdict(self.spec),
            "shift_at": self.spec.shift_at,
            "anchor": self.spec.anchor,
            "width": self.spec.width,
            "pre": self.pre.tolist(),
            "post": self.post.tolist(),
        }


def category_names(n: int) -> list[str]:
    digits = len(str(n - 1))
    return [f"c{k:0{digits}d}" for k in range(n)]


def _dirichlet_on(rng, support: np.ndarray, conc: float, W: int) -> np.ndarray:
    out = np.zeros(W)
    out[support] = rng.dirichlet(np.full(len(support), conc))
    return out


def generate_drift_dataset(spec: DriftSpec) -> tuple[Dataset, DriftTruth]:
    rng = np.random.default_rng(spec.seed)
    W, M, N = spec.n_categories, spec.n_items, spec.n_users
    item_cat = rng.permutation(np.arange(M) % W)
    by_cat = [np.flatnonzero(item_cat == c) for c in range(W)]

    pre = np.zeros((N, W))
    post = np.zeros((N, W))
    for u in range(N):
        if spec.mode == "orthogonal":
            perm = rng.permutation(W)
            half = W // 2
            pre[u] = _dirichlet_on(rng, perm[:half], spec.pre_concentration, W)
            post[u] = _dirichlet_on(rng, perm[half:], spec.post_concentration, W)
        else:
            pre[u] = rng.dirichlet(np.full(W, spec.pre_concentration))
            post[u] = pre[u] if spec.mode == "none" else rng.dirichlet(np.full(W, spec.post_concentration))

    k = spec.interactions_per_window
    users, items, stamps = [], [], []
    width = int(spec.width)
    for u in range(N):
        for j in range(1, spec.windows + 1):
            pref = post[u] if j <= spec.shift_at else pre[u]
            cats = rng.choice(W, size=k, p=pref)
            picks = np.array([by_cat[c][rng.integers(len(by_cat[c]))] for c in cats])
            # offsets in [0, width) keep every stamp inside (anchor - j*w, anchor - (j-1)*w]
            offsets = rng.integers(0, width, size=k)
            users.append(np.full(k, u))
            items.append(picks)
            stamps.append(spec.anchor - (j - 1) * width - offsets)
    users = np.concatenate(users)
    items = np.concatenate(items)
    stamps = np.concatenate(stamps)
    # pin the newest event to the anchor so auto-derived windows line up
    stamps[np.argmax(stamps)] = spec.anchor

    # keep only items that occur, in a dense ID space
    used = np.unique(items)
    remap = np.full(M, -1)
    remap[used] = np.arange(len(used))
    names = category_names(W)
    catalog = CategoryCatalog.from_assignments([[names[item_cat[i]]] for i in used], names)
    order = np.lexsort((stamps, users))
    dataset = Dataset(
        users=users[order],
        items=remap[items[order]],
        timestamps=stamps[order],
        labels=np.ones(len(users), dtype=np.int8),
        catalog=catalog,
        user_keys=[str(u) for u in range(N)],
        item_keys=[str(i) for i in used],
    )
    return dataset, DriftTruth(spec, pre, post, item_cat[used])


def write_truth(truth: DriftTruth, path) -> None:
    Path(path).write_text(json.dumps(truth.to_json(), indent=2, sort_keys=True) + "\n")

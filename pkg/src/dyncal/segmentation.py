"""Tertile segmentation of users by activity and by profile entropy.

Cut points are nearest-rank percentiles (33.33rd and 66.67th) of the sorted
per-user values; a value equal to a cut belongs to the lower segment.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .metrics import profile_distribution, profile_entropy
from .model import Dataset

SEGMENTS = ("low", "mid", "high")
# entropies of equal distributions computed in different orders can differ in
# the last bits; compare them at this resolution
_ENTROPY_DECIMALS = 12


class SegmentationError(ValueError):
    pass


@dataclass(frozen=True)
class UserSegmentAssignment:
    user: int
    activity_segment: str
    entropy_segment: str
    activity_value: int
    entropy_value: float


def nearest_rank_cuts(values: Sequence[float]) -> tuple[float, float]:
    v = np.sort(np.asarray(values, dtype=np.float64))
    n = len(v)
    if n < 3:
        raise SegmentationError(f"need at least 3 users to form tertiles, got {n}")
    # ranks ceil(n/3) and ceil(2n/3), 1-based
    return float(v[-(-n // 3) - 1]), float(v[-(-2 * n // 3) - 1])


def tertiles(values: Sequence[float]) -> list[str]:
    lo, hi = nearest_rank_cuts(values)
    return [SEGMENTS[0] if x <= lo else SEGMENTS[1] if x <= hi else SEGMENTS[2] for x in values]


def _profile_users(dataset: Dataset) -> tuple[np.ndarray, np.ndarray]:
    pairs = dataset.positive_pairs()
    users = np.arange(dataset.n_users)
    counts = np.bincount(pairs[:, 0], minlength=dataset.n_users)
    return users, counts


def segment_by_activity(dataset: Dataset) -> dict[int, tuple[str, int]]:
    """user -> (segment, deduplicated positive-interaction count) over the full dataset."""
    users, counts = _profile_users(dataset)
    labels = tertiles(counts)
    return {int(u): (labels[k], int(counts[k])) for k, u in enumerate(users)}


def user_entropies(dataset: Dataset) -> dict[int, float]:
    pairs = dataset.positive_pairs()
    users, counts = _profile_users(dataset)
    empty = users[counts == 0]
    if empty.size:
        raise SegmentationError(f"{empty.size} user(s) have no positive interactions, e.g. user {int(empty[0])}")
    bounds = np.searchsorted(pairs[:, 0], np.arange(dataset.n_users + 1))
    return {
        int(u): profile_entropy(profile_distribution(pairs[bounds[u]:bounds[u + 1], 1], dataset.catalog))
        for u in users
    }


def segment_by_entropy(dataset: Dataset) -> dict[int, tuple[str, float]]:
    """user -> (segment, entropy in nats of the full-profile category distribution)."""
    ent = user_entropies(dataset)
    users = sorted(ent)
    rounded = [round(ent[u], _ENTROPY_DECIMALS) for u in users]
    labels = tertiles(rounded)
    return {u: (labels[k], ent[u]) for k, u in enumerate(users)}


def assign_segments(dataset: Dataset) -> list[UserSegmentAssignment]:
    act = segment_by_activity(dataset)
    ent = segment_by_entropy(dataset)
    return [
        UserSegmentAssignment(u, act[u][0], ent[u][0], act[u][1], ent[u][1])
        for u in sorted(act)
    ]


def write_assignments(assignments: Sequence[UserSegmentAssignment], path, user_keys: Sequence[str] | None = None) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["user_id", "activity_segment", "entropy_segment", "activity_value", "entropy_value"])
        for a in assignments:
            key = user_keys[a.user] if user_keys is not None else a.user
            w.writerow([key, a.activity_segment, a.entropy_segment, a.activity_value, repr(a.entropy_value)])

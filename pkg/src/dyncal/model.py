"""Canonical data types shared across the package.

Interactions are stored column-wise in :class:`Dataset` (one NumPy array per
field) so windowing and training can slice them without per-record objects.
:class:`Interaction` is the record view of a single row.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Mapping, Sequence

import numpy as np

SHARE_TOL = 1e-9


class EmptyInputError(ValueError):
    """Raised when an operation receives an empty dataset or item set."""


def _frozen(arr, dtype) -> np.ndarray:
    out = np.array(arr, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class Interaction:
    user: int
    item: int
    timestamp: int
    label: int
    raw_signal: float | None = None


@dataclass(frozen=True)
class CategoryCatalog:
    """Item -> category shares ``p(c|i)`` as a dense ``n_items x W`` matrix.

    A row of zeros means the item has no catalog entry.
    """

    categories: tuple[str, ...]
    shares: np.ndarray

    def __post_init__(self):
        shares = np.asarray(self.shares, dtype=np.float64)
        if shares.ndim != 2 or shares.shape[1] != len(self.categories):
            raise ValueError(
                f"shares must be (n_items, {len(self.categories)}), got {shares.shape}"
            )
        object.__setattr__(self, "categories", tuple(self.categories))
        object.__setattr__(self, "shares", _frozen(shares, np.float64))

    @classmethod
    def from_assignments(
        cls,
        assignments: Sequence[Sequence[str]],
        categories: Sequence[str] | None = None,
    ) -> "CategoryCatalog":
        """Build a catalog splitting each item equally across its listed categories.

        ``assignments[i]`` lists the categories of dense item ``i``.
        """
        if categories is None:
            categories = sorted({c for cats in assignments for c in cats})
        col = {c: k for k, c in enumerate(categories)}
        shares = np.zeros((len(assignments), len(categories)))
        for i, cats in enumerate(assignments):
            uniq = list(dict.fromkeys(cats))
            for c in uniq:
                shares[i, col[c]] = 1.0 / len(uniq)
        return cls(tuple(categories), shares)

    @property
    def n_categories(self) -> int:
        return len(self.categories)

    @property
    def n_items(self) -> int:
        return self.shares.shape[0]

    def item_shares(self, item: int) -> dict[str, float]:
        row = self.shares[item]
        return {self.categories[c]: float(row[c]) for c in np.flatnonzero(row)}


@dataclass(frozen=True)
class Dataset:
    """Column-stored interaction log plus catalog and external-key indices."""

    users: np.ndarray
    items: np.ndarray
    timestamps: np.ndarray
    labels: np.ndarray
    catalog: CategoryCatalog
    user_keys: tuple[str, ...]
    item_keys: tuple[str, ...]
    signals: np.ndarray | None = None
    _user_index: dict = field(default=None, init=False, repr=False, compare=False)
    _item_index: dict = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        n = len(self.users)
        object.__setattr__(self, "users", _frozen(self.users, np.int64))
        object.__setattr__(self, "items", _frozen(self.items, np.int64))
        object.__setattr__(self, "timestamps", _frozen(self.timestamps, np.int64))
        object.__setattr__(self, "labels", _frozen(self.labels, np.int8))
        if self.signals is not None:
            object.__setattr__(self, "signals", _frozen(self.signals, np.float64))
        for name in ("items", "timestamps", "labels"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"column {name!r} has length {len(getattr(self, name))}, expected {n}")
        if self.signals is not None and len(self.signals) != n:
            raise ValueError("column 'signals' has wrong length")
        object.__setattr__(self, "user_keys", tuple(self.user_keys))
        object.__setattr__(self, "item_keys", tuple(self.item_keys))
        object.__setattr__(self, "_user_index", {k: i for i, k in enumerate(self.user_keys)})
        object.__setattr__(self, "_item_index", {k: i for i, k in enumerate(self.item_keys)})

    def __len__(self) -> int:
        return len(self.users)

    @property
    def n_users(self) -> int:
        return len(self.user_keys)

    @property
    def n_items(self) -> int:
        return len(self.item_keys)

    @property
    def user_index(self) -> Mapping[str, int]:
        return self._user_index

    @property
    def item_index(self) -> Mapping[str, int]:
        return self._item_index

    def interactions(self) -> Iterator[Interaction]:
        for k in range(len(self)):
            yield self[k]

    def __getitem__(self, k: int) -> Interaction:
        sig = None if self.signals is None else float(self.signals[k])
        return Interaction(
            int(self.users[k]), int(self.items[k]), int(self.timestamps[k]), int(self.labels[k]), sig
        )

    def subset(self, index: np.ndarray) -> "Dataset":
        """Rows selected by ``index`` (bool mask or positions); ID space is kept."""
        return Dataset(
            self.users[index],
            self.items[index],
            self.timestamps[index],
            self.labels[index],
            self.catalog,
            self.user_keys,
            self.item_keys,
            None if self.signals is None else self.signals[index],
        )

    def positive_pairs(self) -> np.ndarray:
        """Deduplicated ``(user, item)`` rows of positive interactions, sorted."""
        pos = self.labels == 1
        pairs = np.stack([self.users[pos], self.items[pos]], axis=1)
        if len(pairs) == 0:
            return pairs.reshape(0, 2)
        return np.unique(pairs, axis=0)

    def order_by_user_recency(self) -> np.ndarray:
        """Row positions sorted by user, then timestamp descending."""
        return np.lexsort((-self.timestamps, self.users))


@dataclass(frozen=True)
class CategoryDistribution:
    """Probability vector over the catalog's categories.

    ``empty`` marks a distribution built from an empty item set; its
    ``probs`` are all zero and callers decide whether to exclude it.
    """

    probs: np.ndarray
    empty: bool = False

    def __post_init__(self):
        object.__setattr__(self, "probs", _frozen(self.probs, np.float64))

    def __len__(self) -> int:
        return len(self.probs)


@dataclass(frozen=True)
class RecommendationList:
    user: int
    items: tuple[int, ...]
    scores: tuple[float, ...]

    def __len__(self) -> int:
        return len(self.items)


@dataclass(frozen=True)
class DatasetStats:
    n_users: int
    n_items: int
    n_categories: int
    n_interactions: int
    sparsity: float


@dataclass(frozen=True)
class Violation:
    kind: str
    location: str
    detail: str = ""


def sparsity(n_users: int, n_items: int, n_interactions: int) -> float:
    return 1.0 - n_interactions / (n_users * n_items)


def dataset_stats(dataset: Dataset) -> DatasetStats:
    if len(dataset) == 0 or dataset.n_users == 0 or dataset.n_items == 0:
        raise EmptyInputError("dataset_stats: dataset has no interactions")
    n_pos = len(dataset.positive_pairs())
    return DatasetStats(
        n_users=dataset.n_users,
        n_items=dataset.n_items,
        n_categories=dataset.catalog.n_categories,
        n_interactions=n_pos,
        sparsity=sparsity(dataset.n_users, dataset.n_items, n_pos),
    )


def validate(dataset: Dataset) -> list[Violation]:
    """Check every type invariant; one :class:`Violation` per breach."""
    out: list[Violation] = []
    n_u, n_i = dataset.n_users, dataset.n_items
    users, items = dataset.users, dataset.items

    for k in np.flatnonzero((users < 0) | (users >= n_u)):
        out.append(Violation("dangling user", f"interaction {k}", f"user={users[k]}"))
    for k in np.flatnonzero((items < 0) | (items >= n_i)):
        out.append(Violation("dangling item", f"interaction {k}", f"item={items[k]}"))
    for k in np.flatnonzero(dataset.timestamps <= 0):
        out.append(Violation("non-positive timestamp", f"interaction {k}", str(dataset.timestamps[k])))
    for k in np.flatnonzero((dataset.labels != 0) & (dataset.labels != 1)):
        out.append(Violation("non-binary label", f"interaction {k}", str(dataset.labels[k])))
    if dataset.signals is not None:
        bad = np.flatnonzero(dataset.signals < 0)
        for k in bad:
            out.append(Violation("negative signal", f"interaction {k}", str(dataset.signals[k])))

    cat = dataset.catalog
    shares = cat.shares
    if len(set(cat.categories)) != len(cat.categories):
        out.append(Violation("duplicate category", "catalog"))
    if shares.shape[0] < n_i:
        out.append(Violation("catalog too short", "catalog", f"{shares.shape[0]} rows for {n_i} items"))
    for i in np.flatnonzero((shares < 0).any(axis=1)):
        out.append(Violation("negative share", f"item {i}"))
    row_sums = shares.sum(axis=1)
    listed = row_sums > 0
    for i in np.flatnonzero(listed & (np.abs(row_sums - 1.0) > SHARE_TOL)):
        out.append(Violation("shares not normalized", f"item {i}", f"sum={row_sums[i]:.12g}"))

    valid_items = items[(items >= 0) & (items < min(n_i, shares.shape[0]))]
    for i in np.unique(valid_items[~listed[valid_items]]):
        out.append(Violation("missing catalog entry", f"item {i}"))
    return out

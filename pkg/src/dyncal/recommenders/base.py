"""Training-set container and the shared top-k routine."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from ..model import Dataset, RecommendationList


class ColdUserError(KeyError):
    """The user has no training interactions in the model."""


@dataclass(frozen=True)
class TrainSet:
    """Deduplicated positive ``(user, item)`` pairs in a fixed ID space.

    ``negative_pairs`` holds observed label-0 pairs, which BPR can optionally
    sample as negatives.
    """

    n_users: int
    n_items: int
    pairs: np.ndarray
    negative_pairs: np.ndarray | None = None

    def __post_init__(self):
        pairs = np.asarray(self.pairs, dtype=np.int64).reshape(-1, 2)
        pairs = np.unique(pairs, axis=0) if len(pairs) else pairs
        pairs.setflags(write=False)
        object.__setattr__(self, "pairs", pairs)
        if self.negative_pairs is not None:
            neg = np.asarray(self.negative_pairs, dtype=np.int64).reshape(-1, 2)
            if len(neg):
                neg = np.unique(neg, axis=0)
                # a pair that is also positive is not a negative
                keys = neg[:, 0] * self.n_items + neg[:, 1]
                neg = neg[~np.isin(keys, self.keys())]
            neg.setflags(write=False)
            object.__setattr__(self, "negative_pairs", neg)

    @classmethod
    def from_dataset(cls, data: Dataset) -> "TrainSet":
        neg = data.labels == 0
        return cls(
            data.n_users,
            data.n_items,
            data.positive_pairs(),
            np.stack([data.users[neg], data.items[neg]], axis=1),
        )

    def __len__(self) -> int:
        return len(self.pairs)

    def keys(self) -> np.ndarray:
        """Sorted ``user * n_items + item`` keys of the positive pairs."""
        return self.pairs[:, 0] * self.n_items + self.pairs[:, 1]

    def items(self) -> np.ndarray:
        """Items with at least one positive, ascending."""
        return np.unique(self.pairs[:, 1])

    def users(self) -> np.ndarray:
        return np.unique(self.pairs[:, 0])

    def matrix(self) -> sp.csr_matrix:
        """Binary ``n_users x n_items`` CSR matrix."""
        data = np.ones(len(self.pairs))
        m = sp.csr_matrix(
            (data, (self.pairs[:, 0], self.pairs[:, 1])), shape=(self.n_users, self.n_items)
        )
        m.sort_indices()
        return m

    def user_items(self, user: int) -> np.ndarray:
        lo, hi = np.searchsorted(self.pairs[:, 0], [user, user + 1])
        return self.pairs[lo:hi, 1]


def top_k(model, user: int, candidates, exclude=(), k: int = 10) -> RecommendationList:
    """Highest-scoring candidates not in ``exclude``; ties go to the lower item id."""
    if not model.knows_user(user):
        raise ColdUserError(f"user {user} has no training interactions in this model")
    cand = np.asarray(sorted(set(np.asarray(candidates).tolist()) - set(np.asarray(exclude).tolist())), dtype=np.int64)
    if cand.size == 0:
        return RecommendationList(user, (), ())
    scores = model.score_user(user)[cand]
    order = np.lexsort((cand, -scores))[:k]
    return RecommendationList(user, tuple(cand[order].tolist()), tuple(scores[order].tolist()))


def top_k_many(model, users, candidates: np.ndarray, train: TrainSet, k: int = 10) -> dict[int, RecommendationList]:
    """``top_k`` for several users against one candidate set, excluding each user's train items."""
    cand = np.unique(np.asarray(candidates, dtype=np.int64))
    out = {}
    for u in users:
        u = int(u)
        if not model.knows_user(u):
            raise ColdUserError(f"user {u} has no training interactions in this model")
        mask = ~np.isin(cand, train.user_items(u), assume_unique=True)
        c = cand[mask]
        scores = model.score_user(u)[c]
        order = np.lexsort((c, -scores))[:k]
        out[u] = RecommendationList(u, tuple(c[order].tolist()), tuple(scores[order].tolist()))
    return out

"""Item-based nearest neighbours with cosine similarity on binary interactions."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .base import TrainSet


@dataclass
class ItemKnnModel:
    similarity: sp.csr_matrix  # full item-item cosine, zero diagonal
    neighbors: sp.csr_matrix  # row i keeps i's top-k neighbours
    user_items: sp.csr_matrix
    k_neighbors: int
    level: int | None = None

    def knows_user(self, user: int) -> bool:
        return 0 <= user < self.user_items.shape[0] and self.user_items.indptr[user + 1] > self.user_items.indptr[user]

    def score_user(self, user: int) -> np.ndarray:
        # score(u, i) = sum over u's items j among i's neighbours of sim(i, j)
        row = self.user_items.getrow(user)
        return np.asarray((self.neighbors @ row.T).todense()).ravel()


def cosine_similarity(X: sp.csr_matrix) -> sp.csr_matrix:
    """Item-item cosine of a binary user-item matrix, diagonal removed."""
    X = sp.csr_matrix(X, dtype=np.float64)
    co = (X.T @ X).tocsr()
    norms = np.sqrt(np.asarray(X.power(2).sum(axis=0)).ravel())
    inv = np.divide(1.0, norms, out=np.zeros_like(norms), where=norms > 0)
    D = sp.diags(inv)
    sim = (D @ co @ D).tocsr()
    sim.setdiag(0.0)
    sim.eliminate_zeros()
    sim.sort_indices()
    return sim


def _prune_rows(sim: sp.csr_matrix, k: int) -> sp.csr_matrix:
    indptr, indices, data = [0], [], []
    for i in range(sim.shape[0]):
        lo, hi = sim.indptr[i], sim.indptr[i + 1]
        cols, vals = sim.indices[lo:hi], sim.data[lo:hi]
        # ties broken by lower item id
        keep = np.lexsort((cols, -vals))[:k]
        keep = keep[np.argsort(cols[keep])]
        indices.extend(cols[keep].tolist())
        data.extend(vals[keep].tolist())
        indptr.append(len(indices))
    return sp.csr_matrix((data, indices, indptr), shape=sim.shape)


def train_itemknn(train: TrainSet, k_neighbors: int = 50, *, level: int | None = None) -> ItemKnnModel:
    if len(train.items()) < 2:
        raise ValueError("train_itemknn: need at least two items")
    if k_neighbors < 1:
        raise ValueError("k_neighbors must be >= 1")
    X = train.matrix()
    sim = cosine_similarity(X)
    return ItemKnnModel(sim, _prune_rows(sim, k_neighbors), X, k_neighbors, level)

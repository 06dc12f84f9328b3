"""Exhaustive hyperparameter search with NDCG@k on held-out validation items."""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Mapping, Sequence

import numpy as np

from ..metrics import ndcg_at_k
from .base import TrainSet, top_k_many
from .bpr import BprDivergenceError, BprHyperparams, train_bpr
from .itemknn import train_itemknn

DEFAULT_LR_GRID = (1e-4, 5e-4, 1e-3, 5e-3, 1e-2)
DEFAULT_DIM_GRID = (64, 128)
DEFAULT_KNN_GRID = (20, 50, 100)


class GridSearchError(RuntimeError):
    pass


@dataclass(frozen=True)
class GridTrial:
    params: dict
    score: float | None  # None when training diverged
    error: str | None = None


@dataclass(frozen=True)
class GridResult:
    best: dict
    best_score: float
    trace: tuple[GridTrial, ...]


def mean_ndcg(model, fit: TrainSet, validation: Mapping[int, set], k: int = 10) -> float:
    users = [u for u in sorted(validation) if model.knows_user(u)]
    if not users:
        return 0.0
    recs = top_k_many(model, users, fit.items(), fit, k)
    return float(np.mean([ndcg_at_k(recs[u], validation[u], k) for u in users]))


def _search(points: Sequence[dict], train_fn, fit, validation, k) -> GridResult:
    if not points:
        raise ValueError("grid is empty")
    trace = []
    best, best_score = None, -np.inf
    for params in points:
        try:
            model = train_fn(params)
        except BprDivergenceError as exc:
            trace.append(GridTrial(params, None, str(exc)))
            continue
        score = mean_ndcg(model, fit, validation, k)
        trace.append(GridTrial(params, score))
        # points arrive in tie-break order, so only a strict improvement wins
        if score > best_score:
            best, best_score = params, score
    if best is None:
        raise GridSearchError(f"all {len(points)} grid points diverged")
    return GridResult(best, best_score, tuple(trace))


def grid_search_bpr(
    fit: TrainSet,
    validation: Mapping[int, set],
    base: BprHyperparams,
    learning_rates: Sequence[float] = DEFAULT_LR_GRID,
    embedding_dims: Sequence[int] = DEFAULT_DIM_GRID,
    *,
    k: int = 10,
    backend: str | None = None,
) -> GridResult:
    """Train every (learning rate, embedding size) pair and keep the best mean NDCG@k.

    Ties go to the lowest learning rate, then the smallest embedding.
    """
    points = [
        {"learning_rate": float(lr), "embedding_dim": int(d)}
        for lr in sorted(set(learning_rates))
        for d in sorted(set(embedding_dims))
    ]
    return _search(
        points, lambda p: train_bpr(fit, replace(base, **p), backend=backend), fit, validation, k
    )


def grid_search_itemknn(
    fit: TrainSet,
    validation: Mapping[int, set],
    k_neighbors: Sequence[int] = DEFAULT_KNN_GRID,
    *,
    k: int = 10,
) -> GridResult:
    points = [{"k_neighbors": int(n)} for n in sorted(set(k_neighbors))]
    return _search(points, lambda p: train_itemknn(fit, p["k_neighbors"]), fit, validation, k)

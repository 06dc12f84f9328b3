"""Category distributions, KL miscalibration, NDCG and profile entropy.

Logs are natural throughout.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .model import CategoryCatalog, CategoryDistribution, EmptyInputError, RecommendationList


@dataclass(frozen=True)
class MetricConfig:
    smoothing_alpha: float = 0.01
    k: int = 10

    def __post_init__(self):
        if not 0.0 <= self.smoothing_alpha < 1.0:
            raise ValueError(f"smoothing_alpha must be in [0, 1), got {self.smoothing_alpha}")
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")


def _probs(dist) -> np.ndarray:
    if isinstance(dist, CategoryDistribution):
        return dist.probs
    return np.asarray(dist, dtype=np.float64)


def _mean_shares(items, catalog: CategoryCatalog) -> CategoryDistribution:
    items = np.asarray(list(items) if not isinstance(items, np.ndarray) else items, dtype=np.int64)
    if items.size == 0:
        return CategoryDistribution(np.zeros(catalog.n_categories), empty=True)
    return CategoryDistribution(catalog.shares[items].mean(axis=0))


def profile_distribution(items: Iterable[int], catalog: CategoryCatalog) -> CategoryDistribution:
    """Mean of ``p(c|i)`` over the user's items. Empty input gives a flagged-empty result."""
    if isinstance(items, (set, frozenset)):
        items = sorted(items)
    return _mean_shares(items, catalog)


def recommendation_distribution(rec: RecommendationList, catalog: CategoryCatalog) -> CategoryDistribution:
    # Unweighted over the list: no rank discount.
    items = rec.items if isinstance(rec, RecommendationList) else rec
    if len(items) == 0:
        raise EmptyInputError("recommendation_distribution: empty recommendation list")
    return _mean_shares(items, catalog)


def miscalibration(p, q, cfg: MetricConfig | None = None) -> float:
    """KL(p || q~) with ``q~ = (1 - alpha) q + alpha p``.

    Terms where ``p(c) = 0`` contribute nothing. With ``alpha = 0`` and a
    category where ``q(c) = 0 < p(c)`` the result is ``inf``.
    """
    alpha = (cfg or MetricConfig()).smoothing_alpha
    p, q = _probs(p), _probs(q)
    if p.shape != q.shape:
        raise ValueError(f"length mismatch: p has {p.shape[0]} entries, q has {q.shape[0]}")
    q_s = (1.0 - alpha) * q + alpha * p
    mask = p > 0
    pm, qm = p[mask], q_s[mask]
    if np.any(qm == 0):
        return math.inf
    return float(np.sum(pm * np.log(pm / qm)))


def ndcg_at_k(rec, relevant, k: int = 10) -> float:
    """Binary-relevance NDCG with ``1/log2(rank + 1)`` discounts."""
    if k < 1:
        raise ValueError("k must be >= 1")
    items = rec.items if isinstance(rec, RecommendationList) else rec
    relevant = set(relevant)
    if not relevant:
        return 0.0
    gains = np.array([1.0 if it in relevant else 0.0 for it in items[:k]])
    discounts = 1.0 / np.log2(np.arange(2, k + 2))
    dcg = float(np.dot(gains, discounts[: len(gains)]))
    idcg = float(discounts[: min(k, len(relevant))].sum())
    return dcg / idcg


def profile_entropy(p) -> float:
    p = _probs(p)
    nz = p[p > 0]
    return float(-np.sum(nz * np.log(nz)))

"""Bayesian Personalized Ranking matrix factorization.

Scores are ``x_ui = <U_u, V_i> + b_i``. Each epoch visits every positive pair
``negatives_per_positive`` times in a seeded random order, pairs it with an
unobserved item drawn uniformly from the training items, and takes one SGD
step on ``-log sigmoid(x_ui - x_uj)`` with L2 shrinkage.

All random draws happen here in NumPy, so the compiled and fallback kernels see
the same triples and differ only in floating-point summation order.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .base import TrainSet
from .kernels import DEFAULT_BACKEND, get_sgd_epoch

logger = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1


class BprDivergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class BprHyperparams:
    learning_rate: float = 0.01
    embedding_dim: int = 64
    l2_reg: float = 0.01
    epochs: int = 100
    negatives_per_positive: int = 1
    seed: int = 0
    init_std: float = 0.1
    prefer_observed_negatives: bool = False

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.embedding_dim < 1:
            raise ValueError(f"embedding_dim must be >= 1, got {self.embedding_dim}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.negatives_per_positive < 1:
            raise ValueError("negatives_per_positive must be >= 1")
        if self.l2_reg < 0:
            raise ValueError("l2_reg must be >= 0")


@dataclass
class BprModel:
    user_factors: np.ndarray
    item_factors: np.ndarray
    item_bias: np.ndarray
    hyperparams: BprHyperparams
    trained_users: np.ndarray
    level: int | None = None
    backend: str = DEFAULT_BACKEND
    loss_history: list[float] = field(default_factory=list)

    def knows_user(self, user: int) -> bool:
        return 0 <= user < len(self.trained_users) and bool(self.trained_users[user])

    def score_user(self, user: int) -> np.ndarray:
        return self.item_factors @ self.user_factors[user] + self.item_bias

    def save(self, path) -> None:
        meta = {
            "format": "dyncal-bpr",
            "version": CHECKPOINT_VERSION,
            "level": self.level,
            "seed": self.hyperparams.seed,
            "backend": self.backend,
            "hyperparams": asdict(self.hyperparams),
            "loss_history": self.loss_history,
        }
        with Path(path).open("wb") as fh:
            np.savez(
                fh,
                meta=np.array(json.dumps(meta, sort_keys=True)),
                user_factors=self.user_factors,
                item_factors=self.item_factors,
                item_bias=self.item_bias,
                trained_users=self.trained_users,
            )

    @classmethod
    def load(cls, path) -> "BprModel":
        with np.load(path, allow_pickle=False) as z:
            meta = json.loads(str(z["meta"]))
            if meta.get("format") != "dyncal-bpr" or meta.get("version") != CHECKPOINT_VERSION:
                raise ValueError(f"{path}: not a version-{CHECKPOINT_VERSION} BPR checkpoint")
            return cls(
                user_factors=z["user_factors"],
                item_factors=z["item_factors"],
                item_bias=z["item_bias"],
                hyperparams=BprHyperparams(**meta["hyperparams"]),
                trained_users=z["trained_users"],
                level=meta["level"],
                backend=meta["backend"],
                loss_history=meta["loss_history"],
            )


class _NegativeSampler:
    def __init__(self, train: TrainSet, prefer_observed: bool):
        self.n_items = train.n_items
        self.candidates = train.items()
        self.pos_keys = train.keys()  # sorted
        counts = np.bincount(train.pairs[:, 0], minlength=train.n_users)
        # a user holding every candidate item has no valid negative
        self.saturated = counts >= len(self.candidates)
        self.obs_ptr = self.obs_items = None
        if prefer_observed and train.negative_pairs is not None and len(train.negative_pairs):
            neg = train.negative_pairs
            self.obs_ptr = np.concatenate([[0], np.cumsum(np.bincount(neg[:, 0], minlength=train.n_users))])
            self.obs_items = neg[:, 1]

    def _is_positive(self, users, items):
        keys = users * self.n_items + items
        pos = np.searchsorted(self.pos_keys, keys)
        pos = np.minimum(pos, len(self.pos_keys) - 1)
        return self.pos_keys[pos] == keys

    def draw(self, rng: np.random.Generator, users: np.ndarray) -> np.ndarray:
        neg = self.candidates[rng.integers(len(self.candidates), size=len(users))]
        bad = np.flatnonzero(self._is_positive(users, neg))
        while bad.size:
            neg[bad] = self.candidates[rng.integers(len(self.candidates), size=bad.size)]
            bad = bad[self._is_positive(users[bad], neg[bad])]
        if self.obs_ptr is not None:
            lo, hi = self.obs_ptr[users], self.obs_ptr[users + 1]
            has = hi > lo
            pick = lo + np.floor(rng.random(len(users)) * (hi - lo)).astype(np.int64)
            neg = np.where(has, self.obs_items[np.where(has, pick, 0)], neg)
        return neg


def train_bpr(train: TrainSet, hp: BprHyperparams, *, level: int | None = None, backend: str | None = None) -> BprModel:
    """Fit BPR on ``train``; identical inputs and seed give bit-identical factors."""
    if len(train) == 0:
        raise ValueError("train_bpr: training set has no positive pairs")
    if len(train.items()) < 2:
        raise ValueError("train_bpr: need at least two distinct training items")
    backend = backend or DEFAULT_BACKEND
    sgd_epoch = get_sgd_epoch(backend)
    rng = np.random.default_rng(hp.seed)
    d = hp.embedding_dim
    U = np.ascontiguousarray(rng.normal(0.0, hp.init_std, size=(train.n_users, d)))
    V = np.ascontiguousarray(rng.normal(0.0, hp.init_std, size=(train.n_items, d)))
    b = np.zeros(train.n_items)

    sampler = _NegativeSampler(train, hp.prefer_observed_negatives)
    pairs = train.pairs[~sampler.saturated[train.pairs[:, 0]]]
    if len(pairs) == 0:
        raise ValueError("train_bpr: every user has interacted with every training item")
    base_users = np.repeat(pairs[:, 0], hp.negatives_per_positive)
    base_items = np.repeat(pairs[:, 1], hp.negatives_per_positive)

    history = []
    for epoch in range(1, hp.epochs + 1):
        order = rng.permutation(len(base_users))
        users = np.ascontiguousarray(base_users[order])
        pos = np.ascontiguousarray(base_items[order])
        neg = np.ascontiguousarray(sampler.draw(rng, users))
        total = sgd_epoch(U, V, b, users, pos, neg, hp.learning_rate, hp.l2_reg)
        mean_loss = total / len(users)
        if not math.isfinite(mean_loss) or not (np.isfinite(U).all() and np.isfinite(V).all() and np.isfinite(b).all()):
            raise BprDivergenceError(
                f"BPR diverged at epoch {epoch} (learning_rate={hp.learning_rate}, "
                f"embedding_dim={hp.embedding_dim}, l2_reg={hp.l2_reg}, seed={hp.seed})"
            )
        history.append(mean_loss)
    logger.debug("bpr level=%s seed=%s final loss %.5f", level, hp.seed, history[-1])

    trained = np.zeros(train.n_users, dtype=bool)
    trained[train.pairs[:, 0]] = True
    return BprModel(U, V, b, hp, trained, level=level, backend=backend, loss_history=history)

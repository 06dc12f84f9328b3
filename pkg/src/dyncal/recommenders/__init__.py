from .base import ColdUserError, TrainSet, top_k, top_k_many
from .bpr import BprDivergenceError, BprHyperparams, BprModel, train_bpr
from .itemknn import ItemKnnModel, cosine_similarity, train_itemknn
from .kernels import BACKENDS, DEFAULT_BACKEND
from .tuning import (
    DEFAULT_DIM_GRID,
    DEFAULT_KNN_GRID,
    DEFAULT_LR_GRID,
    GridResult,
    GridSearchError,
    GridTrial,
    grid_search_bpr,
    grid_search_itemknn,
    mean_ndcg,
)

__all__ = [
    "BACKENDS",
    "BprDivergenceError",
    "BprHyperparams",
    "BprModel",
    "ColdUserError",
    "DEFAULT_BACKEND",
    "DEFAULT_DIM_GRID",
    "DEFAULT_KNN_GRID",
    "DEFAULT_LR_GRID",
    "GridResult",
    "GridSearchError",
    "GridTrial",
    "ItemKnnModel",
    "TrainSet",
    "cosine_similarity",
    "grid_search_bpr",
    "grid_search_itemknn",
    "mean_ndcg",
    "top_k",
    "top_k_many",
    "train_bpr",
    "train_itemknn",
]

"""Backend selection for the BPR training loop.

The Cython kernel is used when it was compiled at install time; otherwise the
NumPy fallback is used. ``DYNCAL_PURE_PYTHON=1`` forces the fallback.
"""
import os

from ._bpr_fallback import sgd_epoch as python_sgd_epoch

try:
    if os.environ.get("DYNCAL_PURE_PYTHON"):
        raise ImportError("pure-Python backend forced by DYNCAL_PURE_PYTHON")
    from ._bpr_kernel import sgd_epoch as cython_sgd_epoch
except ImportError:
    cython_sgd_epoch = None

BACKENDS = {"python": python_sgd_epoch}
if cython_sgd_epoch is not None:
    BACKENDS["cython"] = cython_sgd_epoch

DEFAULT_BACKEND = "cython" if cython_sgd_epoch is not None else "python"


def get_sgd_epoch(backend: str | None = None):
    name = backend or DEFAULT_BACKEND
    try:
        return BACKENDS[name]
    except KeyError:
        raise ValueError(f"backend {name!r} unavailable; have {sorted(BACKENDS)}") from None

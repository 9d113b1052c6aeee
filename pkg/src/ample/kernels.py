"""Backend selection for the hot loops.

The compiled extension is preferred; the NumPy fallback is used when it is
missing. ``use_backend`` switches explicitly (tests and benchmarks).
"""
from __future__ import annotations

import logging
from types import ModuleType

from . import _pykernels

log = logging.getLogger(__name__)

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None

_active: ModuleType = _compiled if _compiled is not None else _pykernels


def available() -> list[str]:
    return ["compiled", "python"] if _compiled is not None else ["python"]


def backend_name() -> str:
    return "compiled" if _active is _compiled and _compiled is not None else "python"


def use_backend(name: str) -> None:
    global _active
    if name == "compiled":
        if _compiled is None:
            raise RuntimeError("compiled kernels are not built; run `pip install -e .`")
        _active = _compiled
    elif name == "python":
        _active = _pykernels
    else:
        raise ValueError(f"unknown backend {name!r}")
    log.debug("kernel backend: %s", name)


def trace_runs(grid, cell_size, x0, y0, x1, y1, eps=1e-9):
    return _active.trace_runs(grid, cell_size, x0, y0, x1, y1, eps)


def nll_grad(X, y, theta, sigma):
    return _active.nll_grad(X, y, theta, sigma)


def descend(X, y, theta0, sigma0, step, max_iters, grad_tol, sigma_floor, trace_every=0):
    return _active.descend(X, y, theta0, sigma0, step, max_iters, grad_tol, sigma_floor,
                           trace_every)

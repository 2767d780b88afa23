"""Hot-kernel dispatch.

The compiled extension ``exgov._kernels`` is used when it has been built;
otherwise the numpy fallback in ``exgov._pykernels`` is selected. Setting
``EXGOV_PURE_PYTHON=1`` forces the fallback. :func:`set_backend` switches at
runtime (used by the benchmark and the equivalence tests).
"""

from __future__ import annotations

import os

import numpy as np

from exgov import _pykernels

try:
    from exgov import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None

_BACKENDS = {"python": _pykernels}
if _compiled is not None:
    _BACKENDS["compiled"] = _compiled

_active = _pykernels
BACKEND = "python"


def available_backends() -> list[str]:
    return sorted(_BACKENDS)


def set_backend(name: str) -> None:
    global _active, BACKEND
    if name not in _BACKENDS:
        raise ValueError(f"kernel backend {name!r} not available; have {available_backends()}")
    _active = _BACKENDS[name]
    BACKEND = name


def network_terms(G, B, delta, eq, xdp, with_gradients=True):
    return _active.network_terms(
        np.ascontiguousarray(G, dtype=float),
        np.ascontiguousarray(B, dtype=float),
        np.ascontiguousarray(delta, dtype=float),
        np.ascontiguousarray(eq, dtype=float),
        np.ascontiguousarray(xdp, dtype=float),
        with_gradients,
    )


def lu_solve(M, b, tol):
    return _active.lu_solve(M, b, tol)


def jacobi_eigh(S, tol, max_sweeps=100):
    return _active.jacobi_eigh(S, tol, max_sweeps)


if _compiled is not None and os.environ.get("EXGOV_PURE_PYTHON", "") not in ("1", "true", "yes"):
    set_backend("compiled")

"""Backend dispatch for the copula kernels.

The compiled ``_ckernels`` extension is used when it imports; otherwise the
numpy implementation in ``_kernels_py`` is used.  Setting the environment
variable ``COPULAPID_PURE_PYTHON=1`` before import forces the fallback, and
:func:`use_backend` switches at runtime (used by the tests and benchmark).

All public functions broadcast their arguments, so ``theta`` may be a
scalar while ``u`` and ``v`` are arrays of any shape.
"""
from __future__ import annotations

import os

import numpy as np

from . import _kernels_py

try:  # pragma: no cover - depends on the build
    from . import _ckernels
except ImportError:  # pragma: no cover
    _ckernels = None

__all__ = [
    "BACKEND",
    "available_backends",
    "use_backend",
    "logpdf",
    "logpdf_grad",
    "h",
    "h_grad",
    "hinv",
    "dykstra",
]


def available_backends():
    """Names of the importable backends, preferred first."""
    return (["compiled"] if _ckernels is not None else []) + ["python"]


def _pick(name):
    if name == "compiled":
        if _ckernels is None:
            raise ImportError("compiled copula kernels are not built")
        return _ckernels
    if name == "python":
        return _kernels_py
    raise ValueError(f"unknown backend {name!r}")


BACKEND = "python" if (_ckernels is None or os.environ.get("COPULAPID_PURE_PYTHON") == "1") else "compiled"
_impl = _pick(BACKEND)


def use_backend(name: str) -> str:
    """Select ``"compiled"`` or ``"python"``; returns the previous backend."""
    global BACKEND, _impl
    previous = BACKEND
    _impl = _pick(name)
    BACKEND = name
    return previous


def _prepare(theta, u, v):
    theta, u, v = np.broadcast_arrays(
        np.asarray(theta, dtype=float), np.asarray(u, dtype=float), np.asarray(v, dtype=float)
    )
    shape = u.shape
    # broadcast views are read-only and may alias; the kernels need owned buffers
    return shape, [np.array(a, dtype=float, order="C").ravel() for a in (theta, u, v)]


def _call(name, fam, theta, u, v):
    shape, args = _prepare(theta, u, v)
    out = getattr(_impl, name)(int(fam), *args)
    if isinstance(out, tuple):
        return tuple(np.asarray(o).reshape(shape) for o in out)
    return np.asarray(out).reshape(shape)


def logpdf(fam, theta, u, v):
    """Log copula density ``log c(u, v; theta)``."""
    return _call("logpdf", fam, theta, u, v)


def logpdf_grad(fam, theta, u, v):
    """``(log c, d/du, d/dv, d/dtheta)``; the last is NaN outside Gaussian/independence."""
    return _call("logpdf_grad", fam, theta, u, v)


def h(fam, theta, u, v):
    """Conditional CDF ``F(u | v)``."""
    return _call("h", fam, theta, u, v)


def h_grad(fam, theta, u, v):
    """``(h, dh/du, dh/dv, dh/dtheta)``; ``dh/du`` is the density."""
    return _call("h_grad", fam, theta, u, v)


def hinv(fam, theta, w, v):
    """Inverse of :func:`h` in its first argument."""
    return _call("hinv", fam, theta, w, v)


def dykstra(y0, s, K, w, keep, c, tol=1e-12, feas_tol=1e-12, maxiter=20000):
    """Dykstra projection sweeps for pairwise-marginal constraints (see ``_kernels_py.dykstra``)."""
    return _impl.dykstra(
        np.ascontiguousarray(y0, dtype=float), np.ascontiguousarray(s, dtype=float),
        np.ascontiguousarray(K, dtype=float), np.ascontiguousarray(w, dtype=float),
        np.ascontiguousarray(keep, dtype=np.intp), np.ascontiguousarray(c, dtype=float),
        float(tol), float(feas_tol), int(maxiter),
    )

"""A small reverse-mode differentiation tape over numpy arrays.

Nodes hold whole arrays and every primitive is elementwise (with numpy
broadcasting), a reduction, or a matrix product, so one tape records a full
minibatch.  Each primitive stores, per parent, a vector-Jacobian product;
:meth:`Tape.backward` sweeps the tape once in reverse and can be called
repeatedly on the same tape with different roots and seeds.

Every function accepts plain arrays as well as :class:`Var` objects.  With no
:class:`Var` among its arguments a function returns the plain numpy result,
and with :class:`Var` arguments the recorded value is computed by exactly the
same numpy expression, so forward values match direct evaluation bitwise.

Example
-------
>>> tape = Tape()
>>> x = tape.var(0.3)
>>> y = tanh(x)
>>> g = tape.backward(y)
>>> float(g[x])  # 1 - tanh(0.3)**2
0.9146...
"""
from __future__ import annotations

import numpy as np
from scipy import special

from .copula import kernels
from .copula.model import CopulaFamily
from .numerics import EPS, LOG_2PI

__all__ = [
    "Tape",
    "Var",
    "Gradients",
    "value",
    "stop_gradient",
    "add",
    "sub",
    "mul",
    "div",
    "neg",
    "power",
    "exp",
    "log",
    "sqrt",
    "tanh",
    "sigmoid",
    "logit",
    "softplus",
    "std_normal_cdf",
    "std_normal_quantile",
    "std_normal_logpdf",
    "clip",
    "sum",
    "mean",
    "reshape",
    "getitem",
    "matmul",
    "logsumexp",
    "copula_logpdf",
    "copula_h",
    "copula_hinv",
]


class Tape:
    """Append-only record of array operations in topological order."""

    def __init__(self):
        self._values = []
        self._parents = []

    def __len__(self):
        return len(self._values)

    def var(self, val) -> "Var":
        """Register an input (leaf) node."""
        return self._push(np.array(val, dtype=float), ())

    def _push(self, val, parents) -> "Var":
        self._values.append(val)
        self._parents.append(parents)
        return Var(self, len(self._values) - 1, val)

    def backward(self, root: "Var", seed=None) -> "Gradients":
        """Reverse sweep from ``root``.

        Parameters
        ----------
        root : Var or array_like
            Output node.  Need not be scalar.  A plain value (an expression
            that does not depend on any recorded variable) has zero gradient.
        seed : array_like, optional
            Adjoint of ``root``; defaults to ones (i.e. the gradient of
            ``sum(root)``).
        """
        if not isinstance(root, Var):
            return Gradients(self, [])
        if root.tape is not self:
            raise ValueError("root belongs to a different tape")
        adj = [None] * (root.idx + 1)
        if seed is None:
            seed = np.ones_like(root.value)
        adj[root.idx] = np.broadcast_to(np.asarray(seed, dtype=float), root.value.shape).copy()
        for i in range(root.idx, -1, -1):
            g = adj[i]
            if g is None:
                continue
            for p, vjp in self._parents[i]:
                gp = vjp(g)
                adj[p] = gp if adj[p] is None else adj[p] + gp
        return Gradients(self, adj)


class Gradients:
    """Adjoints produced by one reverse sweep; index with the input :class:`Var`."""

    def __init__(self, tape, adj):
        self._tape = tape
        self._adj = adj

    def __getitem__(self, v: "Var") -> np.ndarray:
        if v.tape is not self._tape:
            raise ValueError("variable belongs to a different tape")
        g = self._adj[v.idx] if v.idx < len(self._adj) else None
        return np.zeros_like(v.value) if g is None else g


class Var:
    """Handle to a tape node."""

    __slots__ = ("tape", "idx", "value")
    __array_ufunc__ = None  # make numpy defer to the reflected operators

    def __init__(self, tape, idx, val):
        self.tape = tape
        self.idx = idx
        self.value = val

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Var(idx={self.idx}, value={self.value!r})"

    def __add__(self, o):
        return add(self, o)

    def __radd__(self, o):
        return add(o, self)

    def __sub__(self, o):
        return sub(self, o)

    def __rsub__(self, o):
        return sub(o, self)

    def __mul__(self, o):
        return mul(self, o)

    def __rmul__(self, o):
        return mul(o, self)

    def __truediv__(self, o):
        return div(self, o)

    def __rtruediv__(self, o):
        return div(o, self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, c):
        return power(self, c)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def __matmul__(self, o):
        return matmul(self, o)

    def __rmatmul__(self, o):
        return matmul(o, self)


# --- helpers ----------------------------------------------------------------

def value(x):
    """Forward value of a node or array."""
    return x.value if isinstance(x, Var) else x


def stop_gradient(x):
    """Return the value of ``x`` as a constant; no gradient flows through it."""
    return np.array(value(x), dtype=float, copy=True)


def _tape_of(*args):
    tape = None
    for a in args:
        if isinstance(a, Var):
            if tape is None:
                tape = a.tape
            elif a.tape is not tape:
                raise ValueError("operands recorded on different tapes")
    return tape


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    nd = g.ndim - len(shape)
    if nd > 0:
        g = g.sum(axis=tuple(range(nd)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _record(val, pairs):
    """Push ``val`` with ``(arg, vjp)`` pairs, skipping non-Var arguments."""
    tape = _tape_of(*(a for a, _ in pairs))
    if tape is None:
        return val
    val = np.asarray(val, dtype=float)
    parents = tuple(
        (a.idx, (lambda f, s: (lambda g: _unbroadcast(np.asarray(f(g), dtype=float), s)))(f, a.value.shape))
        for a, f in pairs
        if isinstance(a, Var)
    )
    return tape._push(val, parents)


# --- arithmetic -------------------------------------------------------------

def add(a, b):
    return _record(value(a) + value(b), [(a, lambda g: g), (b, lambda g: g)])


def sub(a, b):
    return _record(value(a) - value(b), [(a, lambda g: g), (b, lambda g: -g)])


def mul(a, b):
    av, bv = value(a), value(b)
    return _record(av * bv, [(a, lambda g: g * bv), (b, lambda g: g * av)])


def div(a, b):
    av, bv = value(a), value(b)
    out = av / bv
    return _record(out, [(a, lambda g: g / bv), (b, lambda g: -g * out / bv)])


def neg(a):
    return _record(-value(a), [(a, lambda g: -g)])


def power(a, c):
    """``a ** c`` for a constant exponent ``c``."""
    if isinstance(c, Var):
        raise TypeError("exponent must be a constant")
    av = value(a)
    return _record(av ** c, [(a, lambda g: g * c * av ** (c - 1))])


# --- elementwise functions --------------------------------------------------

def exp(a):
    out = np.exp(value(a))
    return _record(out, [(a, lambda g: g * out)])


def log(a):
    av = value(a)
    if np.any(np.asarray(av) <= 0):
        raise ValueError("log of non-positive value")
    return _record(np.log(av), [(a, lambda g: g / av)])


def sqrt(a):
    av = value(a)
    if np.any(np.asarray(av) < 0):
        raise ValueError("sqrt of negative value")
    out = np.sqrt(av)
    return _record(out, [(a, lambda g: g * 0.5 / out)])


def tanh(a):
    out = np.tanh(value(a))
    return _record(out, [(a, lambda g: g * (1.0 - out * out))])


def sigmoid(a):
    out = special.expit(value(a))
    return _record(out, [(a, lambda g: g * out * (1.0 - out))])


def logit(a):
    """``log(u / (1 - u))`` of the clamped input."""
    uc = np.clip(value(a), EPS, 1.0 - EPS)
    return _record(np.log(uc) - np.log1p(-uc), [(a, lambda g: g / (uc * (1.0 - uc)))])


def softplus(a):
    av = value(a)
    return _record(np.logaddexp(0.0, av), [(a, lambda g: g * special.expit(av))])


def std_normal_cdf(a):
    av = value(a)
    out = np.clip(special.ndtr(av), EPS, 1.0 - EPS)
    return _record(out, [(a, lambda g: g * np.exp(-0.5 * (av * av + LOG_2PI)))])


def std_normal_quantile(a):
    """Φ⁻¹ of the clamped input; derivative ``1 / φ(Φ⁻¹(u))``."""
    out = special.ndtri(np.clip(value(a), EPS, 1.0 - EPS))
    return _record(out, [(a, lambda g: g * np.exp(0.5 * (out * out + LOG_2PI)))])


def std_normal_logpdf(a):
    av = value(a)
    return _record(-0.5 * (av * av + LOG_2PI), [(a, lambda g: -g * av)])


def clip(a, lo, hi):
    """Clip to ``[lo, hi]``; the gradient is zero where clipping is active."""
    av = value(a)
    out = np.clip(av, lo, hi)
    inside = (av >= lo) & (av <= hi)
    return _record(out, [(a, lambda g: g * inside)])


# --- reductions and linear algebra ----------------------------------------

def sum(a, axis=None, keepdims=False):  # noqa: A001 - mirrors numpy
    av = np.asarray(value(a))
    out = np.sum(av, axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return np.broadcast_to(g, av.shape)

    return _record(out, [(a, vjp)])


def mean(a, axis=None, keepdims=False):
    av = np.asarray(value(a))
    n = av.size if axis is None else np.prod([av.shape[i] for i in np.atleast_1d(axis)])
    return div(sum(a, axis=axis, keepdims=keepdims), float(n))


def reshape(a, shape):
    av = np.asarray(value(a))
    return _record(av.reshape(shape), [(a, lambda g: np.reshape(g, av.shape))])


def getitem(a, idx):
    """Basic or advanced indexing ``a[idx]``."""
    av = np.asarray(value(a))

    def vjp(g):
        out = np.zeros_like(av)
        np.add.at(out, idx, g)
        return out

    return _record(av[idx], [(a, vjp)])


def matmul(a, b):
    """Matrix product for 2-D @ 2-D or 2-D @ 1-D operands."""
    av, bv = np.asarray(value(a)), np.asarray(value(b))
    if av.ndim != 2 or bv.ndim not in (1, 2):
        raise ValueError("matmul supports 2-D @ 2-D and 2-D @ 1-D only")
    out = av @ bv
    if bv.ndim == 1:
        return _record(out, [(a, lambda g: np.outer(g, bv)), (b, lambda g: av.T @ g)])
    return _record(out, [(a, lambda g: g @ bv.T), (b, lambda g: av.T @ g)])


def logsumexp(a, axis):
    """``log(sum(exp(a), axis))`` computed stably; gradient is the softmax."""
    av = np.asarray(value(a))
    out = special.logsumexp(av, axis=axis)
    soft = np.exp(av - np.expand_dims(out, axis))
    return _record(out, [(a, lambda g: np.expand_dims(g, axis) * soft)])


# --- fused copula primitives -------------------------------------------------

_THETA_DIFFERENTIABLE = (CopulaFamily.INDEPENDENCE, CopulaFamily.GAUSSIAN)


def _check_theta_var(fam, theta):
    if isinstance(theta, Var) and CopulaFamily(fam) not in _THETA_DIFFERENTIABLE:
        raise NotImplementedError(f"parameter derivative unavailable for {CopulaFamily(fam).name}")


def copula_logpdf(fam, theta, u, v):
    """Log density ``log c(u, v; theta)`` with partials from the kernels."""
    _check_theta_var(fam, theta)
    val, du, dv, dth = kernels.logpdf_grad(fam, value(theta), value(u), value(v))
    return _record(val, [(u, lambda g: g * du), (v, lambda g: g * dv), (theta, lambda g: g * dth)])


def copula_h(fam, theta, u, v):
    """Conditional CDF ``h(u | v; theta)``; ``dh/du`` is the density."""
    _check_theta_var(fam, theta)
    val, du, dv, dth = kernels.h_grad(fam, value(theta), value(u), value(v))
    return _record(val, [(u, lambda g: g * du), (v, lambda g: g * dv), (theta, lambda g: g * dth)])


def copula_hinv(fam, theta, w, v):
    """Inverse h-function ``x = h^{-1}(w | v; theta)``.

    Partials follow from implicit differentiation of ``h(x | v) = w``:
    ``dx/dw = 1/c``, ``dx/dv = -h_v/c`` and ``dx/dtheta = -h_theta/c`` with
    ``c = dh/dx`` the copula density at ``(x, v)``.
    """
    _check_theta_var(fam, theta)
    thv, wv, vv = value(theta), value(w), value(v)
    x = kernels.hinv(fam, thv, wv, vv)
    if _tape_of(theta, w, v) is None:
        return x
    _, c, hv, hth = kernels.h_grad(fam, thv, x, vv)
    return _record(x, [(w, lambda g: g / c), (v, lambda g: -g * hv / c), (theta, lambda g: -g * hth / c)])

"""Pure-numpy copula kernels (fallback for the compiled ``_ckernels``).

Every function takes a family code, a parameter array and two coordinate
arrays of a common shape.  ``h`` is the conditional CDF ``F(u | v)`` and
``hinv`` inverts it in its first argument.  Gradient variants return
``(value, d/du, d/dv, d/dtheta)``; the parameter derivative is only
available for the Gaussian and independence families and is NaN otherwise.
"""
from __future__ import annotations

import numpy as np
from scipy.special import ndtr, ndtri

INDEPENDENCE, GAUSSIAN, CLAYTON, CLAYTON180, GUMBEL, GUMBEL180, FRANK = range(7)

EPS = 1e-12
GAUSS_RHO_MAX = 1.0 - 1e-10
CLAYTON_MIN = 1e-8
FRANK_MIN = 1e-9
HINV_MAXITER = 200
_HALF_LOG_2PI = 0.5 * np.log(2.0 * np.pi)


def _inv_phi(x):
    return np.exp(0.5 * x * x + _HALF_LOG_2PI)


def _phi(x):
    return np.exp(-0.5 * x * x - _HALF_LOG_2PI)


def _nan_like(x):
    return np.full_like(x, np.nan)


# --- Gaussian ---------------------------------------------------------------

def _gauss_logpdf_grad(th, u, v):
    th = np.clip(th, -GAUSS_RHO_MAX, GAUSS_RHO_MAX)
    x, y = ndtri(u), ndtri(v)
    s = (1.0 - th) * (1.0 + th)
    q = th * th * (x * x + y * y) - 2.0 * th * x * y
    val = -0.5 * np.log(s) - q / (2.0 * s)
    du = -(th * th * x - th * y) / s * _inv_phi(x)
    dv = -(th * th * y - th * x) / s * _inv_phi(y)
    dth = th / s - (th * (x * x + y * y) - x * y) / s - th * q / (s * s)
    return val, du, dv, dth


def _gauss_h_grad(th, u, v):
    th = np.clip(th, -GAUSS_RHO_MAX, GAUSS_RHO_MAX)
    x, y = ndtri(u), ndtri(v)
    s = (1.0 - th) * (1.0 + th)
    rs = np.sqrt(s)
    z = (x - th * y) / rs
    val = ndtr(z)
    pz = _phi(z)
    du = pz / rs * _inv_phi(x)
    dv = -pz * th / rs * _inv_phi(y)
    dth = pz * (-y / rs + (x - th * y) * th / (rs * s))
    return val, du, dv, dth


def _gauss_hinv(th, w, v):
    th = np.clip(th, -GAUSS_RHO_MAX, GAUSS_RHO_MAX)
    rs = np.sqrt((1.0 - th) * (1.0 + th))
    return ndtr(ndtri(w) * rs + th * ndtri(v))


# --- Clayton ----------------------------------------------------------------

def _clayton_logs(a, b):
    """``log(exp(a) + exp(b) - 1)`` for ``a, b >= 0`` without overflow."""
    m = np.maximum(a, b)
    n = np.minimum(a, b)
    big = m > 1.0
    small = np.log1p(np.expm1(np.minimum(a, 1.0)) + np.expm1(np.minimum(b, 1.0)))
    large = m + np.log1p(np.exp(n - m) - np.exp(-m))
    return np.where(big, large, small)


def _clayton_logpdf_grad(th, u, v):
    th = np.maximum(th, CLAYTON_MIN)
    lu, lv = np.log(u), np.log(v)
    a, b = -th * lu, -th * lv
    ls = _clayton_logs(a, b)
    val = np.log1p(th) - (1.0 + th) * (lu + lv) - (2.0 + 1.0 / th) * ls
    du = (-(1.0 + th) + (2.0 * th + 1.0) * np.exp(a - ls)) / u
    dv = (-(1.0 + th) + (2.0 * th + 1.0) * np.exp(b - ls)) / v
    return val, du, dv, _nan_like(val)


def _clayton_h_grad(th, u, v):
    th = np.maximum(th, CLAYTON_MIN)
    lv = np.log(v)
    a, b = -th * np.log(u), -th * lv
    ls = _clayton_logs(a, b)
    val = np.exp(-(th + 1.0) * lv - (1.0 + 1.0 / th) * ls)
    du = np.exp(_clayton_logpdf_grad(th, u, v)[0])
    dv = val * (th + 1.0) / v * (np.exp(b - ls) - 1.0)
    return val, du, dv, _nan_like(val)


def _clayton_hinv(th, w, v):
    th = np.maximum(th, CLAYTON_MIN)
    q = -th / (th + 1.0) * np.log(w)
    b = -th * np.log(v)
    lt = np.logaddexp(0.0, b + np.log(np.expm1(q)))
    return np.exp(-lt / th)


# --- Gumbel -----------------------------------------------------------------

def _gumbel_parts(th, u, v):
    th = np.maximum(th, 1.0)
    x, y = -np.log(u), -np.log(v)
    lx, ly = np.log(x), np.log(y)
    la = np.logaddexp(th * lx, th * ly)
    m = np.exp(la / th)
    rx = np.exp(th * lx - la)
    ry = np.exp(th * ly - la)
    return th, x, y, lx, ly, la, m, rx, ry


def _gumbel_logpdf_grad(th, u, v):
    th, x, y, lx, ly, la, m, rx, ry = _gumbel_parts(th, u, v)
    mt = m + th - 1.0
    val = -m + x + y + (th - 1.0) * (lx + ly) + (1.0 / th - 2.0) * la + np.log(mt)
    dx = -m * rx / x + 1.0 + (th - 1.0) / x + (1.0 - 2.0 * th) * rx / x + m * rx / x / mt
    dy = -m * ry / y + 1.0 + (th - 1.0) / y + (1.0 - 2.0 * th) * ry / y + m * ry / y / mt
    return val, -dx / u, -dy / v, _nan_like(val)


def _gumbel_h_grad(th, u, v):
    th, x, y, lx, ly, la, m, rx, ry = _gumbel_parts(th, u, v)
    val = np.exp(-m + (1.0 / th - 1.0) * la + (th - 1.0) * ly + y)
    du = np.exp(_gumbel_logpdf_grad(th, u, v)[0])
    dlog = -m * ry / y + (1.0 - th) * ry / y + (th - 1.0) / y + 1.0
    dv = -val * dlog / v
    return val, du, dv, _nan_like(val)


def _gumbel_hinv(th, w, v):
    """Safeguarded Newton iteration on ``h(u | v) = w`` inside a bisection bracket."""
    th, w, v = np.broadcast_arrays(th, w, v)
    shape = w.shape
    th, w, v = th.ravel(), w.ravel(), v.ravel()
    lo = np.full(w.shape, EPS)
    hi = np.full(w.shape, 1.0 - EPS)
    u = w.copy()
    fprev = np.full(w.shape, np.inf)
    active = np.ones(w.shape, dtype=bool)
    for _ in range(HINV_MAXITER):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        ui = u[idx]
        hv, c, _, _ = _gumbel_h_grad(th[idx], ui, v[idx])
        f = hv - w[idx]
        above = f > 0
        lo_i = np.where(above, lo[idx], ui)
        hi_i = np.where(above, ui, hi[idx])
        with np.errstate(divide="ignore", invalid="ignore"):
            nu = ui - f / c
        # bisect when Newton leaves the bracket or fails to halve the residual
        bad = ~np.isfinite(nu) | (nu <= lo_i) | (nu >= hi_i) | (np.abs(f) > 0.5 * fprev[idx])
        nu = np.where(bad, 0.5 * (lo_i + hi_i), nu)
        tiny = 1e-15 * np.maximum(ui, 1e-300)
        done = (np.abs(f) <= 1e-14) | (np.abs(nu - ui) <= tiny) | (hi_i - lo_i <= tiny)
        lo[idx], hi[idx], fprev[idx] = lo_i, hi_i, np.abs(f)
        u[idx] = np.where(done, ui, nu)
        active[idx[done]] = False
    else:
        if active.any():
            raise RuntimeError("Gumbel h-inverse did not converge")
    return u.reshape(shape)


# --- Frank ------------------------------------------------------------------

def _frank_safe(th):
    return np.where(np.abs(th) < FRANK_MIN, np.where(th < 0, -FRANK_MIN, FRANK_MIN), th)


def _frank_logpdf_grad(th, u, v):
    th = _frank_safe(th)
    em1 = np.expm1(-th)
    gu, gv = np.expm1(-th * u), np.expm1(-th * v)
    d = -em1 - gu * gv
    val = np.log(th * -em1) - th * (u + v) - 2.0 * np.log(np.abs(d))
    du = -th - 2.0 * th * np.exp(-th * u) * gv / d
    dv = -th - 2.0 * th * np.exp(-th * v) * gu / d
    return val, du, dv, _nan_like(val)


def _frank_h_grad(th, u, v):
    th = _frank_safe(th)
    em1 = np.expm1(-th)
    gu, gv = np.expm1(-th * u), np.expm1(-th * v)
    d = -em1 - gu * gv
    ev = np.exp(-th * v)
    val = ev * -gu / d
    du = np.exp(_frank_logpdf_grad(th, u, v)[0])
    dv = val * (-th - th * ev * gu / d)
    return val, du, dv, _nan_like(val)


def _frank_hinv(th, w, v):
    th = _frank_safe(th)
    gx = w * np.expm1(-th) / (np.exp(-th * v) - w * np.expm1(-th * v))
    return -np.log1p(gx) / th


# --- independence -----------------------------------------------------------

def _indep_logpdf_grad(th, u, v):
    z = np.zeros(np.broadcast(th, u, v).shape)
    return z, z.copy(), z.copy(), z.copy()


def _indep_h_grad(th, u, v):
    val = np.broadcast_to(u, np.broadcast(th, u, v).shape).astype(float)
    return val, np.ones_like(val), np.zeros_like(val), np.zeros_like(val)


def _indep_hinv(th, w, v):
    return np.broadcast_to(w, np.broadcast(th, w, v).shape).astype(float)


_BASE = {
    INDEPENDENCE: (_indep_logpdf_grad, _indep_h_grad, _indep_hinv),
    GAUSSIAN: (_gauss_logpdf_grad, _gauss_h_grad, _gauss_hinv),
    CLAYTON: (_clayton_logpdf_grad, _clayton_h_grad, _clayton_hinv),
    GUMBEL: (_gumbel_logpdf_grad, _gumbel_h_grad, _gumbel_hinv),
    FRANK: (_frank_logpdf_grad, _frank_h_grad, _frank_hinv),
}
_ROTATED = {CLAYTON180: CLAYTON, GUMBEL180: GUMBEL}


def _clamp(a):
    return np.clip(np.asarray(a, dtype=float), EPS, 1.0 - EPS)


def logpdf_grad(fam, theta, u, v):
    theta = np.asarray(theta, dtype=float)
    u, v = _clamp(u), _clamp(v)
    if fam in _ROTATED:
        val, du, dv, dth = _BASE[_ROTATED[fam]][0](theta, 1.0 - u, 1.0 - v)
        return val, -du, -dv, dth
    return _BASE[fam][0](theta, u, v)


def logpdf(fam, theta, u, v):
    return logpdf_grad(fam, theta, u, v)[0]


def h_grad(fam, theta, u, v):
    theta = np.asarray(theta, dtype=float)
    u, v = _clamp(u), _clamp(v)
    if fam in _ROTATED:
        val, du, dv, dth = _BASE[_ROTATED[fam]][1](theta, 1.0 - u, 1.0 - v)
        return _clamp(1.0 - val), du, dv, -dth
    val, du, dv, dth = _BASE[fam][1](theta, u, v)
    return _clamp(val), du, dv, dth


def h(fam, theta, u, v):
    return h_grad(fam, theta, u, v)[0]


def hinv(fam, theta, w, v):
    theta = np.asarray(theta, dtype=float)
    w, v = _clamp(w), _clamp(v)
    if fam in _ROTATED:
        return _clamp(1.0 - _BASE[_ROTATED[fam]][2](theta, 1.0 - w, 1.0 - v))
    return _clamp(_BASE[fam][2](theta, w, v))


def dykstra(y0, s, K, w, keep, c, tol, feas_tol, maxiter):
    """Dykstra's projection onto ``{A q = c} ∩ {q >= 0}`` for pairwise-marginal rows.

    ``y0`` and ``s`` are ``(ny, n1, n2)`` arrays (start point and diagonal
    metric; cells with zero scale never move).  The rows of ``A`` are the
    ``(y, x1)`` sums followed by the ``(y, x2)`` sums, each multiplied by
    ``w``; only the rows listed in ``keep`` are constrained, to values ``c``,
    and ``K`` is the pseudo-inverse of ``A S A^T`` on those rows.  Sweeps
    stop once the largest cell change is at most ``tol`` (relative) and the
    unweighted marginal residual is at most ``feas_tol`` in L1 (or is within
    ``1000 * feas_tol`` and has stopped shrinking, which happens at the
    rounding floor of the affine step).  Returns
    ``(q, iterations)``.
    """
    ny, n1, n2 = y0.shape
    nrow = ny * n1 + ny * n2
    y = np.array(y0, dtype=float, copy=True)
    p_inc = np.zeros_like(y)
    q_inc = np.zeros_like(y)
    mag = 1.0 + float(np.max(np.abs(y)))
    v = np.zeros(nrow)
    prev_viol = np.inf
    it = 0
    while it < maxiter:
        it += 1
        z = y + p_inc
        rows = np.concatenate([z.sum(axis=2).ravel(), z.sum(axis=1).ravel()])
        res = rows[keep] * w[keep] - c
        v[:] = 0.0
        v[keep] = (K @ res) * w[keep]
        a = z - s * (v[: ny * n1].reshape(ny, n1)[:, :, None] + v[ny * n1:].reshape(ny, n2)[:, None, :])
        p_inc = z - a
        b = np.maximum(a + q_inc, 0.0)
        q_inc = a + q_inc - b
        change = float(np.max(np.abs(b - y)))
        y = b
        if change <= tol * mag:
            rows = np.concatenate([y.sum(axis=2).ravel(), y.sum(axis=1).ravel()])
            viol = float(np.sum(np.abs(rows[keep] - c / w[keep])))
            # stop when feasible, or when rounding keeps the residual from shrinking
            if viol <= feas_tol or (viol <= 1e3 * feas_tol and viol >= 0.999 * prev_viol):
                break
            prev_viol = viol
    return y, it

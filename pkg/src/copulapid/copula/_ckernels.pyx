# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels (copula functions, Dykstra sweeps); same contract as ``_kernels_py``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, log1p, expm1, sqrt, fabs, NAN, INFINITY, isfinite
from scipy.special.cython_special cimport ndtr, ndtri

cnp.import_array()

cdef double EPS = 1e-12
cdef double GAUSS_RHO_MAX = 1.0 - 1e-10
cdef double CLAYTON_MIN = 1e-8
cdef double FRANK_MIN = 1e-9
cdef double HALF_LOG_2PI = 0.91893853320467274178

cdef enum:
    HINV_MAXITER = 200
    INDEPENDENCE = 0
    GAUSSIAN = 1
    CLAYTON = 2
    CLAYTON180 = 3
    GUMBEL = 4
    GUMBEL180 = 5
    FRANK = 6


cdef inline double clamp(double x) noexcept nogil:
    if x < EPS:
        return EPS
    if x > 1.0 - EPS:
        return 1.0 - EPS
    return x


cdef inline double logaddexp(double a, double b) noexcept nogil:
    if a > b:
        return a + log1p(exp(b - a))
    return b + log1p(exp(a - b))


# --- Gaussian ---------------------------------------------------------------

cdef inline double clip_rho(double th) noexcept nogil:
    if th > GAUSS_RHO_MAX:
        return GAUSS_RHO_MAX
    if th < -GAUSS_RHO_MAX:
        return -GAUSS_RHO_MAX
    return th


cdef double gauss_logpdf(double th, double u, double v, double* du, double* dv, double* dth) noexcept nogil:
    th = clip_rho(th)
    cdef double x = ndtri(u), y = ndtri(v)
    cdef double s = (1.0 - th) * (1.0 + th)
    cdef double q = th * th * (x * x + y * y) - 2.0 * th * x * y
    if du != NULL:
        du[0] = -(th * th * x - th * y) / s * exp(0.5 * x * x + HALF_LOG_2PI)
        dv[0] = -(th * th * y - th * x) / s * exp(0.5 * y * y + HALF_LOG_2PI)
        dth[0] = th / s - (th * (x * x + y * y) - x * y) / s - th * q / (s * s)
    return -0.5 * log(s) - q / (2.0 * s)


cdef double gauss_h(double th, double u, double v, double* du, double* dv, double* dth) noexcept nogil:
    th = clip_rho(th)
    cdef double x = ndtri(u), y = ndtri(v)
    cdef double s = (1.0 - th) * (1.0 + th)
    cdef double rs = sqrt(s)
    cdef double z = (x - th * y) / rs
    cdef double pz
    if du != NULL:
        pz = exp(-0.5 * z * z - HALF_LOG_2PI)
        du[0] = pz / rs * exp(0.5 * x * x + HALF_LOG_2PI)
        dv[0] = -pz * th / rs * exp(0.5 * y * y + HALF_LOG_2PI)
        dth[0] = pz * (-y / rs + (x - th * y) * th / (rs * s))
    return ndtr(z)


cdef double gauss_hinv(double th, double w, double v) noexcept nogil:
    th = clip_rho(th)
    return ndtr(ndtri(w) * sqrt((1.0 - th) * (1.0 + th)) + th * ndtri(v))


# --- Clayton ----------------------------------------------------------------

cdef inline double clayton_logs(double a, double b) noexcept nogil:
    cdef double m = a if a > b else b
    cdef double n = b if a > b else a
    if m > 1.0:
        return m + log1p(exp(n - m) - exp(-m))
    return log1p(expm1(a) + expm1(b))


cdef double clayton_logpdf(double th, double u, double v, double* du, double* dv, double* dth) noexcept nogil:
    if th < CLAYTON_MIN:
        th = CLAYTON_MIN
    cdef double lu = log(u), lv = log(v)
    cdef double a = -th * lu, b = -th * lv
    cdef double ls = clayton_logs(a, b)
    if du != NULL:
        du[0] = (-(1.0 + th) + (2.0 * th + 1.0) * exp(a - ls)) / u
        dv[0] = (-(1.0 + th) + (2.0 * th + 1.0) * exp(b - ls)) / v
        dth[0] = NAN
    return log1p(th) - (1.0 + th) * (lu + lv) - (2.0 + 1.0 / th) * ls


cdef double clayton_h(double th, double u, double v, double* du, double* dv, double* dth) noexcept nogil:
    if th < CLAYTON_MIN:
        th = CLAYTON_MIN
    cdef double lv = log(v)
    cdef double a = -th * log(u), b = -th * lv
    cdef double ls = clayton_logs(a, b)
    cdef double val = exp(-(th + 1.0) * lv - (1.0 + 1.0 / th) * ls)
    if du != NULL:
        du[0] = exp(clayton_logpdf(th, u, v, NULL, NULL, NULL))
        dv[0] = val * (th + 1.0) / v * (exp(b - ls) - 1.0)
        dth[0] = NAN
    return val


cdef double clayton_hinv(double th, double w, double v) noexcept nogil:
    if th < CLAYTON_MIN:
        th = CLAYTON_MIN
    cdef double q = -th / (th + 1.0) * log(w)
    cdef double b = -th * log(v)
    return exp(-logaddexp(0.0, b + log(expm1(q))) / th)


# --- Gumbel -----------------------------------------------------------------

cdef double gumbel_logpdf(double th, double u, double v, double* du, double* dv, double* dth) noexcept nogil:
    if th < 1.0:
        th = 1.0
    cdef double x = -log(u), y = -log(v)
    cdef double lx = log(x), ly = log(y)
    cdef double la = logaddexp(th * lx, th * ly)
    cdef double m = exp(la / th)
    cdef double mt = m + th - 1.0
    cdef double rx, ry
    if du != NULL:
        rx = exp(th * lx - la)
        ry = exp(th * ly - la)
        du[0] = -(-m * rx / x + 1.0 + (th - 1.0) / x + (1.0 - 2.0 * th) * rx / x + m * rx / x / mt) / u
        dv[0] = -(-m * ry / y + 1.0 + (th - 1.0) / y + (1.0 - 2.0 * th) * ry / y + m * ry / y / mt) / v
        dth[0] = NAN
    return -m + x + y + (th - 1.0) * (lx + ly) + (1.0 / th - 2.0) * la + log(mt)


cdef double gumbel_h(double th, double u, double v, double* du, double* dv, double* dth) noexcept nogil:
    if th < 1.0:
        th = 1.0
    cdef double y = -log(v)
    cdef double ly = log(y)
    cdef double la = logaddexp(th * log(-log(u)), th * ly)
    cdef double m = exp(la / th)
    cdef double val = exp(-m + (1.0 / th - 1.0) * la + (th - 1.0) * ly + y)
    cdef double ry
    if du != NULL:
        ry = exp(th * ly - la)
        du[0] = exp(gumbel_logpdf(th, u, v, NULL, NULL, NULL))
        dv[0] = -val * (-m * ry / y + (1.0 - th) * ry / y + (th - 1.0) / y + 1.0) / v
        dth[0] = NAN
    return val


cdef double gumbel_hinv(double th, double w, double v) noexcept nogil:
    cdef double lo = EPS, hi = 1.0 - EPS, u = w, fprev = INFINITY
    cdef double f, c, nu, tiny, dv, dth
    cdef int it
    for it in range(HINV_MAXITER):
        f = gumbel_h(th, u, v, &c, &dv, &dth) - w
        if f > 0:
            hi = u
        else:
            lo = u
        nu = u - f / c
        if not isfinite(nu) or nu <= lo or nu >= hi or fabs(f) > 0.5 * fprev:
            nu = 0.5 * (lo + hi)
        tiny = 1e-15 * (u if u > 1e-300 else 1e-300)
        if fabs(f) <= 1e-14 or fabs(nu - u) <= tiny or hi - lo <= tiny:
            return u
        fprev = fabs(f)
        u = nu
    return -1.0


# --- Frank ------------------------------------------------------------------

cdef inline double frank_safe(double th) noexcept nogil:
    if fabs(th) < FRANK_MIN:
        return -FRANK_MIN if th < 0 else FRANK_MIN
    return th


cdef double frank_logpdf(double th, double u, double v, double* du, double* dv, double* dth) noexcept nogil:
    th = frank_safe(th)
    cdef double em1 = expm1(-th)
    cdef double gu = expm1(-th * u), gv = expm1(-th * v)
    cdef double d = -em1 - gu * gv
    if du != NULL:
        du[0] = -th - 2.0 * th * exp(-th * u) * gv / d
        dv[0] = -th - 2.0 * th * exp(-th * v) * gu / d
        dth[0] = NAN
    return log(th * -em1) - th * (u + v) - 2.0 * log(fabs(d))


cdef double frank_h(double th, double u, double v, double* du, double* dv, double* dth) noexcept nogil:
    th = frank_safe(th)
    cdef double em1 = expm1(-th)
    cdef double gu = expm1(-th * u), gv = expm1(-th * v)
    cdef double d = -em1 - gu * gv
    cdef double ev = exp(-th * v)
    cdef double val = ev * -gu / d
    if du != NULL:
        du[0] = exp(frank_logpdf(th, u, v, NULL, NULL, NULL))
        dv[0] = val * (-th - th * ev * gu / d)
        dth[0] = NAN
    return val


cdef double frank_hinv(double th, double w, double v) noexcept nogil:
    th = frank_safe(th)
    cdef double gx = w * expm1(-th) / (exp(-th * v) - w * expm1(-th * v))
    return -log1p(gx) / th


# --- dispatch ---------------------------------------------------------------

cdef double base_logpdf(int fam, double th, double u, double v, double* du, double* dv, double* dth) noexcept nogil:
    if fam == GAUSSIAN:
        return gauss_logpdf(th, u, v, du, dv, dth)
    if fam == CLAYTON:
        return clayton_logpdf(th, u, v, du, dv, dth)
    if fam == GUMBEL:
        return gumbel_logpdf(th, u, v, du, dv, dth)
    if fam == FRANK:
        return frank_logpdf(th, u, v, du, dv, dth)
    if du != NULL:
        du[0] = 0.0
        dv[0] = 0.0
        dth[0] = 0.0
    return 0.0


cdef double base_h(int fam, double th, double u, double v, double* du, double* dv, double* dth) noexcept nogil:
    if fam == GAUSSIAN:
        return gauss_h(th, u, v, du, dv, dth)
    if fam == CLAYTON:
        return clayton_h(th, u, v, du, dv, dth)
    if fam == GUMBEL:
        return gumbel_h(th, u, v, du, dv, dth)
    if fam == FRANK:
        return frank_h(th, u, v, du, dv, dth)
    if du != NULL:
        du[0] = 1.0
        dv[0] = 0.0
        dth[0] = 0.0
    return u


cdef double base_hinv(int fam, double th, double w, double v) noexcept nogil:
    if fam == GAUSSIAN:
        return gauss_hinv(th, w, v)
    if fam == CLAYTON:
        return clayton_hinv(th, w, v)
    if fam == GUMBEL:
        return gumbel_hinv(th, w, v)
    if fam == FRANK:
        return frank_hinv(th, w, v)
    return w


cdef inline int base_family(int fam) noexcept nogil:
    if fam == CLAYTON180:
        return CLAYTON
    if fam == GUMBEL180:
        return GUMBEL
    return fam


def _check(int fam, th, u, v):
    if fam < 0 or fam > 6:
        raise ValueError(f"unknown family code {fam}")
    n = u.shape[0]
    if th.shape[0] != n or v.shape[0] != n:
        raise ValueError("length mismatch")
    return n


def logpdf_grad(int fam, double[::1] theta, double[::1] u, double[::1] v):
    cdef Py_ssize_t i, n = _check(fam, theta, u, v)
    out = np.empty((4, n))
    cdef double[:, ::1] o = out
    cdef int base = base_family(fam)
    cdef bint rot = base != fam
    cdef double a, b
    with nogil:
        for i in range(n):
            a = clamp(u[i])
            b = clamp(v[i])
            if rot:
                o[0, i] = base_logpdf(base, theta[i], 1.0 - a, 1.0 - b, &o[1, i], &o[2, i], &o[3, i])
                o[1, i] = -o[1, i]
                o[2, i] = -o[2, i]
            else:
                o[0, i] = base_logpdf(base, theta[i], a, b, &o[1, i], &o[2, i], &o[3, i])
    return out[0], out[1], out[2], out[3]


def logpdf(int fam, double[::1] theta, double[::1] u, double[::1] v):
    cdef Py_ssize_t i, n = _check(fam, theta, u, v)
    out = np.empty(n)
    cdef double[::1] o = out
    cdef int base = base_family(fam)
    cdef bint rot = base != fam
    with nogil:
        for i in range(n):
            if rot:
                o[i] = base_logpdf(base, theta[i], 1.0 - clamp(u[i]), 1.0 - clamp(v[i]), NULL, NULL, NULL)
            else:
                o[i] = base_logpdf(base, theta[i], clamp(u[i]), clamp(v[i]), NULL, NULL, NULL)
    return out


def h_grad(int fam, double[::1] theta, double[::1] u, double[::1] v):
    cdef Py_ssize_t i, n = _check(fam, theta, u, v)
    out = np.empty((4, n))
    cdef double[:, ::1] o = out
    cdef int base = base_family(fam)
    cdef bint rot = base != fam
    with nogil:
        for i in range(n):
            if rot:
                o[0, i] = clamp(1.0 - base_h(base, theta[i], 1.0 - clamp(u[i]), 1.0 - clamp(v[i]),
                                             &o[1, i], &o[2, i], &o[3, i]))
                o[3, i] = -o[3, i]
            else:
                o[0, i] = clamp(base_h(base, theta[i], clamp(u[i]), clamp(v[i]), &o[1, i], &o[2, i], &o[3, i]))
    return out[0], out[1], out[2], out[3]


def h(int fam, double[::1] theta, double[::1] u, double[::1] v):
    cdef Py_ssize_t i, n = _check(fam, theta, u, v)
    out = np.empty(n)
    cdef double[::1] o = out
    cdef int base = base_family(fam)
    cdef bint rot = base != fam
    with nogil:
        for i in range(n):
            if rot:
                o[i] = clamp(1.0 - base_h(base, theta[i], 1.0 - clamp(u[i]), 1.0 - clamp(v[i]), NULL, NULL, NULL))
            else:
                o[i] = clamp(base_h(base, theta[i], clamp(u[i]), clamp(v[i]), NULL, NULL, NULL))
    return out


def hinv(int fam, double[::1] theta, double[::1] w, double[::1] v):
    cdef Py_ssize_t i, n = _check(fam, theta, w, v)
    out = np.empty(n)
    cdef double[::1] o = out
    cdef int base = base_family(fam)
    cdef bint rot = base != fam
    cdef double r
    cdef bint failed = False
    with nogil:
        for i in range(n):
            if rot:
                r = base_hinv(base, theta[i], 1.0 - clamp(w[i]), 1.0 - clamp(v[i]))
                if r < 0:
                    failed = True
                    break
                o[i] = clamp(1.0 - r)
            else:
                r = base_hinv(base, theta[i], clamp(w[i]), clamp(v[i]))
                if r < 0:
                    failed = True
                    break
                o[i] = clamp(r)
    if failed:
        raise RuntimeError("Gumbel h-inverse did not converge")
    return out


def dykstra(double[:, :, ::1] y0, double[:, :, ::1] s, double[:, ::1] K, double[::1] w,
            cnp.intp_t[::1] keep, double[::1] c, double tol, double feas_tol, int maxiter):
    """Dykstra's projection onto ``{A q = c} ∩ {q >= 0}`` for pairwise-marginal rows.

    Same contract as ``_kernels_py.dykstra``.
    """
    cdef Py_ssize_t ny = y0.shape[0], n1 = y0.shape[1], n2 = y0.shape[2]
    cdef Py_ssize_t nrow = ny * n1 + ny * n2, m = keep.shape[0]
    cdef Py_ssize_t i, j, k, it, r
    cdef double acc, zz, aa, bb, change, viol, prev_viol = INFINITY, mag = 0.0
    y_arr = np.array(y0, dtype=np.float64, copy=True)
    cdef double[:, :, ::1] y = y_arr
    cdef double[:, :, ::1] z = np.empty_like(y_arr)
    cdef double[:, :, ::1] pinc = np.zeros_like(y_arr)
    cdef double[:, :, ::1] qinc = np.zeros_like(y_arr)
    cdef double[::1] rows = np.empty(nrow)
    cdef double[::1] res = np.empty(m)
    cdef double[::1] mu = np.empty(m)
    cdef double[::1] v = np.empty(nrow)
    for i in range(ny):
        for j in range(n1):
            for k in range(n2):
                if fabs(y[i, j, k]) > mag:
                    mag = fabs(y[i, j, k])
    mag += 1.0
    it = 0
    with nogil:
        while it < maxiter:
            it += 1
            for r in range(nrow):
                rows[r] = 0.0
            for i in range(ny):
                for j in range(n1):
                    for k in range(n2):
                        zz = y[i, j, k] + pinc[i, j, k]
                        z[i, j, k] = zz
                        rows[i * n1 + j] += zz
                        rows[ny * n1 + i * n2 + k] += zz
            for r in range(m):
                res[r] = rows[keep[r]] * w[keep[r]] - c[r]
            for r in range(nrow):
                v[r] = 0.0
            for r in range(m):
                acc = 0.0
                for j in range(m):
                    acc += K[r, j] * res[j]
                v[keep[r]] = acc * w[keep[r]]
            change = 0.0
            for r in range(nrow):
                rows[r] = 0.0
            for i in range(ny):
                for j in range(n1):
                    for k in range(n2):
                        aa = z[i, j, k] - s[i, j, k] * (v[i * n1 + j] + v[ny * n1 + i * n2 + k])
                        pinc[i, j, k] = z[i, j, k] - aa
                        bb = aa + qinc[i, j, k]
                        if bb < 0.0:
                            bb = 0.0
                        qinc[i, j, k] = aa + qinc[i, j, k] - bb
                        if fabs(bb - y[i, j, k]) > change:
                            change = fabs(bb - y[i, j, k])
                        y[i, j, k] = bb
                        rows[i * n1 + j] += bb
                        rows[ny * n1 + i * n2 + k] += bb
            if change <= tol * mag:
                viol = 0.0
                for r in range(m):
                    viol += fabs(rows[keep[r]] - c[r] / w[keep[r]])
                # stop when feasible, or when rounding keeps the residual from shrinking
                if viol <= feas_tol or (viol <= 1e3 * feas_tol and viol >= 0.999 * prev_viol):
                    break
                prev_viol = viol
    return y_arr, int(it)

"""Ground-truth references for the continuous estimator.

* :func:`gaussian_unique_exact` -- closed-form unique information of a
  Gaussian triple with scalar sources.
* :func:`discrete_broja` -- the BROJA decomposition of a finite joint
  distribution, by projected gradient descent on the transportation polytope
  of distributions sharing the two source-target marginals.
* :func:`binary_grid_oracle` -- exhaustive search over the two-dimensional
  feasible set of a 2x2x2 distribution, used to check the solver.
* :func:`quantize_model` -- discretization of the models ``M1``/``M2``
  with equal-mass bins for ``Y``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
from scipy import optimize, special

from .copula import kernels
from .pid import PidReport
from .simgen import model_target

MAX_ALPHABET = 16
X_RANGE = 8.0


def gaussian_unique_exact(rho_y1: float, rho_y2: float, absolute: bool = False) -> float:
    """Unique information of ``X1`` (nats) for a Gaussian triple with scalar sources.

    ``0.5 * log((1 - rho_y2**2) / (1 - rho_y1**2))`` if ``rho_y2 < rho_y1``,
    else 0.  With ``absolute=True`` the indicator compares ``|rho|`` instead,
    which is the meaningful comparison when correlations can be negative.
    """
    if not (abs(rho_y1) < 1.0 and abs(rho_y2) < 1.0):
        raise ValueError("correlations must lie in (-1, 1)")
    a, b = (abs(rho_y1), abs(rho_y2)) if absolute else (rho_y1, rho_y2)
    if not b < a:
        return 0.0
    return max(0.0, 0.5 * math.log((1.0 - rho_y2 ** 2) / (1.0 - rho_y1 ** 2)))


# --- discrete distributions -------------------------------------------------

@dataclass
class DiscreteJoint:
    """Joint probability table ``p[y, x1, x2]``.

    ``labels`` optionally holds the original symbols of each axis.
    """

    p: np.ndarray
    labels: Optional[List[list]] = None

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float)
        if p.ndim != 3:
            raise ValueError("joint table must have three axes (y, x1, x2)")
        if np.any(~np.isfinite(p)) or np.any(p < 0):
            raise ValueError("probabilities must be finite and non-negative")
        if abs(p.sum() - 1.0) > 1e-12:
            raise ValueError(f"probabilities sum to {p.sum()!r}, not 1")
        self.p = p
        if self.labels is None:
            self.labels = [list(range(n)) for n in p.shape]

    @classmethod
    def from_rows(cls, rows, normalize: bool = False) -> "DiscreteJoint":
        """Build from ``(y, x1, x2, probability)`` tuples; symbols may be any hashable."""
        rows = list(rows)
        axes = [sorted({r[k] for r in rows}, key=_sort_key) for k in range(3)]
        index = [{s: i for i, s in enumerate(ax)} for ax in axes]
        p = np.zeros([len(ax) for ax in axes])
        for y, x1, x2, pr in rows:
            p[index[0][y], index[1][x1], index[2][x2]] += float(pr)
        if normalize:
            p = p / p.sum()
        return cls(p, axes)

    @classmethod
    def from_csv(cls, path) -> "DiscreteJoint":
        """Read ``y,x1,x2,probability`` rows (header required)."""
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            missing = {"y", "x1", "x2", "probability"} - set(reader.fieldnames or [])
            if missing:
                raise ValueError(f"missing columns: {sorted(missing)}")
            rows = []
            for line, r in enumerate(reader, start=2):
                try:
                    rows.append((r["y"], r["x1"], r["x2"], float(r["probability"])))
                except (TypeError, ValueError) as exc:
                    raise ValueError(f"line {line}: malformed row ({exc})") from None
        return cls.from_rows(rows)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["y", "x1", "x2", "probability"])
            for idx in np.ndindex(self.p.shape):
                w.writerow([self.labels[k][i] for k, i in enumerate(idx)] + [repr(float(self.p[idx]))])

    def mutual_informations(self):
        """``(I(Y:X1), I(Y:X2), I(Y:(X1,X2)))`` in nats."""
        p = self.p
        py = p.sum(axis=(1, 2))
        return (
            _mi(p.sum(axis=2), py, p.sum(axis=(0, 2))),
            _mi(p.sum(axis=1), py, p.sum(axis=(0, 1))),
            _mi(p.reshape(p.shape[0], -1), py, p.sum(axis=0).ravel()),
        )


def _sort_key(s):
    try:
        return (0, float(s), str(s))
    except (TypeError, ValueError):
        return (1, 0.0, str(s))


def _mi(pxy, px, py) -> float:
    """Mutual information of a 2-D table with marginals ``px`` (rows) and ``py`` (columns)."""
    mask = pxy > 0
    return float(np.sum(pxy[mask] * (np.log(pxy[mask]) - np.log(np.outer(px, py)[mask]))))


def conditional_mi_y_x1_given_x2(q: np.ndarray) -> float:
    """``I_q(Y:X1|X2)`` in nats for a table ``q[y, x1, x2]``."""
    q12 = np.broadcast_to(q.sum(axis=0, keepdims=True), q.shape)
    qy2 = np.broadcast_to(q.sum(axis=1, keepdims=True), q.shape)
    q2 = np.broadcast_to(q.sum(axis=(0, 1), keepdims=True), q.shape)
    m = q > 0
    return float(np.sum(q[m] * (np.log(q[m]) + np.log(q2[m]) - np.log(q12[m]) - np.log(qy2[m]))))


# --- projected-gradient BROJA solver ------------------------------------------

class _MarginalPolytope:
    """``{q >= 0 : sum_x2 q = p(y,x1), sum_x1 q = p(y,x2)}`` restricted to a support mask."""

    def __init__(self, p: np.ndarray):
        ny, n1, n2 = p.shape
        self.shape = p.shape
        py1 = p.sum(axis=2)
        py2 = p.sum(axis=1)
        mask = (py1[:, :, None] > 0) & (py2[:, None, :] > 0)
        self.idx = np.flatnonzero(mask)
        yy, aa, bb = np.unravel_index(self.idx, p.shape)
        rows = [(yy == y) & (aa == a) for y in range(ny) for a in range(n1)]
        rows += [(yy == y) & (bb == b) for y in range(ny) for b in range(n2)]
        A = np.array(rows, dtype=float).reshape(len(rows), self.idx.size)
        c = np.concatenate([py1.ravel(), py2.ravel()])
        keep = A.any(axis=1)
        self.A, self.c = A[keep], c[keep]
        self._keep = keep
        self._n1rows = ny * n1
        self._mask = mask

    def full(self, x: np.ndarray) -> np.ndarray:
        q = np.zeros(int(np.prod(self.shape)))
        q[self.idx] = x
        return q.reshape(self.shape)

    def project(self, x, scale=None, tol=1e-12, feas_tol=1e-12, maxiter=20000):
        """Projection onto the polytope by Dykstra's alternating projections.

        The projection is taken in the metric ``<u, v> = sum u v / scale``
        (Euclidean when ``scale`` is None).  In a diagonal metric the
        orthant projection is still clipping at zero, and the affine
        projection is ``z - S A^T (A S A^T)^+ (A z - c)``.  Constraint rows
        are divided by ``sqrt(c)`` first, which keeps ``A S A^T`` well
        conditioned when the marginals span many orders of magnitude.
        """
        s = np.ones_like(x) if scale is None else scale
        w = 1.0 / np.sqrt(self.c)
        A = self.A * w[:, None]
        c = self.c * w
        K = np.linalg.pinv((A * s) @ A.T, rcond=1e-12, hermitian=True)
        # the sweeps run on the full grid; cells off the support carry zero
        # scale and therefore never move
        w_full = np.zeros(self._keep.size)
        w_full[self._keep] = w
        y, _ = kernels.dykstra(self.full(x), self.full(s), K, w_full, np.flatnonzero(self._keep),
                               c, tol, feas_tol * float(np.sum(self.c)), maxiter)
        return y.ravel()[self.idx]

    def violation(self, x) -> float:
        """Total-variation distance of ``x``'s pairwise marginals from the targets."""
        return float(np.sum(np.abs(self.A @ x - self.c))) / 2.0

    def frank_wolfe_gap(self, x, g) -> float:
        """``max_{s in Q} g . (x - s)``, an upper bound on ``f(x) - min f`` for convex ``f``."""
        # Work with x's own marginals (so rounding-level drift cannot make the LP
        # infeasible), cells as fractions of their largest possible mass and
        # rows divided by their targets; masses span many orders of magnitude.
        b = self.A @ x
        ok = b > 0
        cap = np.min(np.where(self.A > 0, self.c[:, None], np.inf), axis=0)
        A = self.A[ok] * cap[None, :] / b[ok, None]
        for method in ("highs", "highs-ipm"):
            res = optimize.linprog(g * cap, A_eq=A, b_eq=np.ones(int(ok.sum())), bounds=(0, None),
                                   method=method)
            if res.status == 0:
                return float(g @ x - res.fun)
        return float("nan")


LOG_FLOOR = 1e-300
SCALE_FLOOR = 1e-8
ALPHA_MIN, ALPHA_MAX = 1e-3, 1e3
GAP_NUDGE = 1e-9
DRIFT_TOL = 1e-11


def _objective_and_grad(poly: _MarginalPolytope, x):
    """``f(q) = sum q log q(y|x1,x2)`` (equal to ``I(Y:X1|X2)`` up to a constant on the polytope).

    The gradient is ``log q(y|x1,x2)``.  In an empty ``(x1, x2)`` column it
    is 0 (new mass there would have conditional probability 1); an empty
    cell of a non-empty column gets the floor ``log(1e-300)``.
    """
    q = poly.full(x)
    q12 = np.broadcast_to(q.sum(axis=0)[None, :, :], q.shape)
    with np.errstate(divide="ignore", invalid="ignore"):
        cond = np.where(q12 > 0, q / q12, 1.0)
    logc = np.log(np.maximum(cond, LOG_FLOOR))
    f = float(np.sum(np.where(q > 0, q * logc, 0.0)))
    return f, logc.ravel()[poly.idx]


@dataclass
class BrojaSolution:
    q: np.ndarray
    unique_x1: float
    objective_history: List[float] = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    constraint_violation: float = 0.0
    duality_gap: float = float("nan")


def solve_broja(p: np.ndarray, tol: float = 1e-10, maxiter: int = 5000, patience: int = 5,
                armijo: float = 1e-4) -> BrojaSolution:
    """Minimize ``I_q(Y:X1|X2)`` over joints sharing ``p``'s (y, x1) and (y, x2) marginals.

    Scaled projected gradient descent: each iteration takes the step
    ``q - alpha D grad`` with ``D = diag(q)`` (floored) and a Barzilai-Borwein
    length ``alpha``, projects it back onto the feasible
    polytope (Dykstra, in the metric induced by ``D``) and backtracks along
    the resulting feasible direction until the Armijo condition holds.  The
    scaling matches the ``1/q`` curvature of the entropy, so cells with tiny
    mass do not force tiny steps.  Starts from the product extension
    ``p(y) p(x1|y) p(x2|y)``; stops once the objective has decreased by
    less than ``tol`` nats on ``patience`` consecutive iterations.
    """
    p = np.asarray(p, dtype=float)
    poly = _MarginalPolytope(p)
    py = p.sum(axis=(1, 2))
    py1 = p.sum(axis=2)
    py2 = p.sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        q0 = np.where(py[:, None, None] > 0, py1[:, :, None] * py2[:, None, :] / py[:, None, None], 0.0)
    x0 = x = q0.ravel()[poly.idx]
    # per-cell scale floor: a small fraction of the largest mass the cell can hold
    cap = np.minimum(py1[:, :, None], py2[:, None, :]) * np.ones(p.shape)
    floor = SCALE_FLOOR * cap.ravel()[poly.idx]
    f, g = _objective_and_grad(poly, x)
    hist = [f]
    converged = False
    stalled = 0
    it = 0
    alpha = 1.0
    for it in range(1, maxiter + 1):
        scale = np.maximum(x, floor)
        dvec = poly.project(x - alpha * scale * g, scale=scale) - x
        slope = float(g @ dvec)
        t = 1.0
        while True:
            x_new = np.maximum(x + t * dvec, 0.0)
            f_new, g_new = _objective_and_grad(poly, x_new)
            if f_new <= f + armijo * t * slope or t < 1e-12:
                break
            t *= 0.5
        decrease = f - f_new
        if f_new <= f and poly.violation(x_new) > DRIFT_TOL:
            x_new = poly.project(x_new, scale=np.maximum(x_new, floor))
            f_new, g_new = _objective_and_grad(poly, x_new)
            decrease = f - f_new
        if f_new <= f:
            # Barzilai-Borwein step length in the scaled metric for the next iteration
            sx, sg = x_new - x, g_new - g
            curv = float(sx @ sg)
            if curv > 0:
                alpha = float(np.clip(np.sum(sx * sx / scale) / curv, ALPHA_MIN, ALPHA_MAX))
            x, f, g = x_new, f_new, g_new
            hist.append(f)
        else:
            alpha = max(ALPHA_MIN, 0.5 * alpha)
        stalled = stalled + 1 if decrease < tol else 0
        if stalled >= patience:
            converged = True
            break
    # the scaled projections leave tiny marginal drift; finish with a Euclidean projection
    if poly.violation(x) > 1e-14:
        x = poly.project(x, scale=np.maximum(x, floor), tol=1e-15, feas_tol=1e-15, maxiter=100000)
        f, g = _objective_and_grad(poly, x)
    q = poly.full(x)
    # The entropy gradient is -inf on empty cells of occupied columns, which makes the
    # linear bound vacuous there; certify a point nudged towards the (positive) start.
    x_gap = (1.0 - GAP_NUDGE) * x + GAP_NUDGE * x0
    f_gap, g_gap = _objective_and_grad(poly, x_gap)
    gap = poly.frank_wolfe_gap(x_gap, g_gap) + max(0.0, f_gap - f)
    return BrojaSolution(q, conditional_mi_y_x1_given_x2(q), hist, it, converged, poly.violation(x), gap)


def discrete_broja(p, tol: float = 1e-10) -> PidReport:
    """BROJA decomposition of a finite distribution ``p[y, x1, x2]`` (report in nats)."""
    joint = p if isinstance(p, DiscreteJoint) else DiscreteJoint(np.asarray(p, dtype=float))
    if max(joint.p.shape) > MAX_ALPHABET:
        raise ValueError(f"alphabets larger than {MAX_ALPHABET} are not supported")
    I1, I2, I12 = joint.mutual_informations()
    sol = solve_broja(joint.p, tol=tol)
    diag = {
        "duality_gap": sol.duality_gap,
        "solver_iterations": sol.iterations,
        "converged": sol.converged,
        "constraint_violation_tv": sol.constraint_violation,
    }
    return PidReport.from_terms(sol.unique_x1, I1, I2, I12, diag)


# --- 2x2x2 grid oracle -------------------------------------------------------

def binary_feasible_set(p: np.ndarray):
    """Intervals for ``t_y = q(y, 0, 0)``, which parametrize the binary feasible set."""
    p = np.asarray(p, dtype=float)
    if p.shape != (2, 2, 2):
        raise ValueError("binary oracle needs a 2x2x2 table")
    py = p.sum(axis=(1, 2))
    a = p.sum(axis=2)[:, 0]   # p(y, x1=0)
    b = p.sum(axis=1)[:, 0]   # p(y, x2=0)
    lo = np.maximum(0.0, a + b - py)
    hi = np.minimum(a, b)
    return lo, hi, py, a, b


def _binary_table(t0, t1, py, a, b):
    t = np.stack([t0, t1])  # (2, ...) over y
    shp = (2,) + (1,) * (t.ndim - 1)
    a_, b_, py_ = a.reshape(shp), b.reshape(shp), py.reshape(shp)
    # cells at the polytope vertices can come out as -1e-17 from rounding
    q00 = t
    q01 = np.maximum(a_ - t, 0.0)
    q10 = np.maximum(b_ - t, 0.0)
    q11 = np.maximum(py_ - a_ - b_ + t, 0.0)
    return q00, q01, q10, q11


def _binary_cmi(q00, q01, q10, q11):
    """Vectorized ``I(Y:X1|X2)``; arrays indexed ``[y, ...]``, names ``q{x1}{x2}``."""
    def xlogy(x, y):
        return special.xlogy(x, np.where(x > 0, y, 1.0))

    total = 0.0
    for x2_cells in ((q00, q10), (q01, q11)):   # fixed x2: cells over x1
        qa, qb = x2_cells
        qx1x2_a = qa.sum(axis=0, keepdims=True)
        qx1x2_b = qb.sum(axis=0, keepdims=True)
        qy2 = qa + qb
        q2 = qy2.sum(axis=0, keepdims=True)
        for cell, m12 in ((qa, qx1x2_a), (qb, qx1x2_b)):
            total = total + np.sum(xlogy(cell, cell * q2) - xlogy(cell, m12 * qy2), axis=0)
    return total


def binary_grid_oracle(p: np.ndarray, n: int = 100, refinements: int = 3) -> float:
    """Minimum of ``I(Y:X1|X2)`` (nats) over an ``n x n`` grid of the binary feasible set.

    The search is exhaustive on the initial grid and then repeated on grids
    zoomed around the best point, each spanning two cells of the previous
    grid in every direction.
    """
    lo, hi, py, a, b = binary_feasible_set(p)
    best_val = math.inf
    best = None
    lo_c, hi_c = lo.copy(), hi.copy()
    for _ in range(refinements + 1):
        g0 = np.linspace(lo_c[0], hi_c[0], n)
        g1 = np.linspace(lo_c[1], hi_c[1], n)
        T0, T1 = np.meshgrid(g0, g1, indexing="ij")
        vals = _binary_cmi(*_binary_table(T0, T1, py, a, b))
        i, j = np.unravel_index(np.nanargmin(vals), vals.shape)
        if vals[i, j] < best_val:
            best_val, best = float(vals[i, j]), (g0[i], g1[j])
        h0 = (hi_c[0] - lo_c[0]) / (n - 1)
        h1 = (hi_c[1] - lo_c[1]) / (n - 1)
        lo_c = np.array([max(lo[0], best[0] - 2 * h0), max(lo[1], best[1] - 2 * h1)])
        hi_c = np.array([min(hi[0], best[0] + 2 * h0), min(hi[1], best[1] + 2 * h1)])
    return max(0.0, best_val)


def binary_grid_report(p: np.ndarray, n: int = 100) -> PidReport:
    joint = DiscreteJoint(np.asarray(p, dtype=float))
    I1, I2, I12 = joint.mutual_informations()
    return PidReport.from_terms(binary_grid_oracle(joint.p, n), I1, I2, I12, {"oracle": "binary_grid"})


# --- quantization of the continuous models ------------------------------------

def gaussian_cell_masses(rho12: float, n_x: int, order: int = 20) -> np.ndarray:
    """Probability of each square of an ``n_x x n_x`` grid on ``[-8, 8]^2``.

    Uses tensor Gauss-Legendre quadrature of the standard bivariate normal
    density with correlation ``rho12`` in every cell; masses are renormalized
    to sum to 1.
    """
    if not abs(rho12) < 1.0:
        raise ValueError("|rho12| must be < 1")
    edges = np.linspace(-X_RANGE, X_RANGE, n_x + 1)
    nodes, weights = np.polynomial.legendre.leggauss(order)
    half = 0.5 * (edges[1:] - edges[:-1])
    mid = 0.5 * (edges[1:] + edges[:-1])
    pts = mid[:, None] + half[:, None] * nodes[None, :]       # (n_x, order)
    wts = half[:, None] * weights[None, :]
    s = 1.0 - rho12 ** 2
    X, Y = pts[:, None, :, None], pts[None, :, None, :]
    dens = np.exp(-(X * X - 2 * rho12 * X * Y + Y * Y) / (2 * s)) / (2 * math.pi * math.sqrt(s))
    mass = np.einsum("ik,jl,ijkl->ij", wts, wts, dens)
    return mass / mass.sum()


def max_entropy_bins(values: np.ndarray, masses: np.ndarray, n_bins: int) -> np.ndarray:
    """Maximum-entropy binning of weighted values into ``n_bins`` contiguous bins.

    Equal values (tie groups) always share a bin.  Among all ways of cutting
    the sorted tie groups into ``n_bins`` contiguous, non-empty bins, the one
    maximizing the entropy of the bin masses is chosen (dynamic programming
    over cut points), i.e. the bins are as close to equal-mass as the ties
    allow.  Ties between equally good cuttings go to the earliest cut.
    """
    values = np.asarray(values, dtype=float).ravel()
    masses = np.asarray(masses, dtype=float).ravel()
    uniq, inv = np.unique(values, return_inverse=True)
    n_groups = uniq.size
    if n_groups < 2:
        raise ValueError("degenerate target range: all values equal")
    if n_groups < n_bins:
        raise ValueError(f"only {n_groups} distinct target values for {n_bins} bins")
    group_mass = np.bincount(inv, weights=masses, minlength=n_groups) / masses.sum()
    cum = np.concatenate([[0.0], np.cumsum(group_mass)])

    def plogp(m):
        return np.where(m > 0, m * np.log(np.where(m > 0, m, 1.0)), 0.0)

    # best[k, j]: minimal sum of m log m covering groups [0, j) with k bins
    best = np.full((n_bins + 1, n_groups + 1), np.inf)
    arg = np.zeros((n_bins + 1, n_groups + 1), dtype=int)
    best[0, 0] = 0.0
    for k in range(1, n_bins + 1):
        for j in range(k, n_groups + 1):
            i = np.arange(k - 1, j)
            cand = best[k - 1, i] + plogp(cum[j] - cum[i])
            pos = int(np.argmin(cand))
            best[k, j] = cand[pos]
            arg[k, j] = i[pos]
    group_bin = np.empty(n_groups, dtype=int)
    j = n_groups
    for k in range(n_bins, 0, -1):
        i = arg[k, j]
        group_bin[i:j] = k - 1
        j = i
    return group_bin[inv]


def quantize_model(kind: str, w1: float, w2: float, rho12: float, n_x: int = 16, n_y: int = 3,
                   order: int = 20) -> DiscreteJoint:
    """Discretize model ``M1``/``M2`` into a joint table ``p[y_bin, x1_cell, x2_cell]``.

    ``(X1, X2)`` is standard bivariate normal restricted to ``[-8, 8]^2``
    and cut into ``n_x`` equal segments per axis; ``Y`` is evaluated at cell
    midpoints and binned into ``n_y`` maximum-entropy (as nearly equal-mass
    as ties allow) bins.
    """
    if n_x < 2 or n_y < 2:
        raise ValueError("need at least two bins per variable")
    if max(n_x, n_y) > MAX_ALPHABET:
        raise ValueError(f"alphabets larger than {MAX_ALPHABET} are not supported")
    mass = gaussian_cell_masses(rho12, n_x, order)
    edges = np.linspace(-X_RANGE, X_RANGE, n_x + 1)
    mid = 0.5 * (edges[1:] + edges[:-1])
    M1, M2 = np.meshgrid(mid, mid, indexing="ij")
    kind = str(kind).upper()
    if kind not in ("M1", "M2"):
        raise ValueError(f"unknown model {kind!r}")
    yv = model_target(kind, w1, w2, M1, M2)
    bins = max_entropy_bins(yv, mass, n_y).reshape(n_x, n_x)
    p = np.zeros((n_y, n_x, n_x))
    for k in range(n_y):
        p[k] = np.where(bins == k, mass, 0.0)
    p /= p.sum()
    return DiscreteJoint(p, [list(range(n_y)), mid.tolist(), mid.tolist()])

"""Parametric bivariate copula families, maximum-likelihood fitting and AIC selection."""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum
from typing import Iterable, Optional

import numpy as np
from scipy import integrate, optimize

from . import kernels

MIN_PAIRS = 50
FIT_XATOL = 1e-6


class CopulaFamily(IntEnum):
    """Supported families.  The declaration order is the AIC tie-break order."""

    INDEPENDENCE = 0
    GAUSSIAN = 1
    CLAYTON = 2
    CLAYTON180 = 3
    GUMBEL = 4
    GUMBEL180 = 5
    FRANK = 6

    @property
    def n_params(self) -> int:
        return 0 if self is CopulaFamily.INDEPENDENCE else 1

    @property
    def bounds(self) -> Optional[tuple]:
        """Closed search interval used when fitting the parameter."""
        return _BOUNDS.get(self)

    def check_theta(self, theta: float) -> None:
        """Raise ``ValueError`` if ``theta`` lies outside the family's domain."""
        if self is CopulaFamily.INDEPENDENCE:
            return
        if not math.isfinite(theta):
            raise ValueError(f"{self.name}: non-finite parameter")
        if self is CopulaFamily.GAUSSIAN:
            ok = -1.0 < theta < 1.0
        elif self in (CopulaFamily.CLAYTON, CopulaFamily.CLAYTON180):
            ok = 0.0 < theta <= 28.0
        elif self in (CopulaFamily.GUMBEL, CopulaFamily.GUMBEL180):
            ok = 1.0 <= theta <= 17.0
        else:
            ok = -35.0 <= theta <= 35.0 and theta != 0.0
        if not ok:
            raise ValueError(f"{self.name}: parameter {theta!r} outside its domain")


_BOUNDS = {
    CopulaFamily.GAUSSIAN: (-0.99999, 0.99999),
    CopulaFamily.CLAYTON: (1e-4, 28.0),
    CopulaFamily.CLAYTON180: (1e-4, 28.0),
    CopulaFamily.GUMBEL: (1.0, 17.0),
    CopulaFamily.GUMBEL180: (1.0, 17.0),
    CopulaFamily.FRANK: (-35.0, 35.0),
}

ALL_FAMILIES = tuple(CopulaFamily)


def _debye1(x: float) -> float:
    """First Debye function ``(1/x) * int_0^x t / (e^t - 1) dt``."""
    if x == 0.0:
        return 1.0
    val, _ = integrate.quad(lambda t: t / math.expm1(t) if t != 0.0 else 1.0, 0.0, x)
    return val / x


@dataclass(frozen=True)
class CopulaModel:
    """A bivariate copula with a fixed parameter.

    Attributes
    ----------
    family : CopulaFamily
    theta : float
        Scalar parameter (ignored for the independence family).
    loglik : float
        Log-likelihood in nats on the fitting data (0 if not fitted).
    aic : float
        ``2 k - 2 loglik``.
    n_fitted : int
        Number of pairs the model was fitted on.
    """

    family: CopulaFamily
    theta: float = 0.0
    loglik: float = 0.0
    aic: float = 0.0
    n_fitted: int = 0

    def __post_init__(self):
        fam = CopulaFamily(self.family)
        object.__setattr__(self, "family", fam)
        object.__setattr__(self, "theta", 0.0 if fam is CopulaFamily.INDEPENDENCE else float(self.theta))
        fam.check_theta(self.theta)

    @property
    def n_params(self) -> int:
        return self.family.n_params

    def logpdf(self, u1, u2):
        return kernels.logpdf(self.family, self.theta, u1, u2)

    def density(self, u1, u2):
        return np.exp(self.logpdf(u1, u2))

    def h(self, u_i, u_j):
        """Conditional CDF ``F(u_i | u_j)``."""
        return kernels.h(self.family, self.theta, u_i, u_j)

    def h_inverse(self, v, u_j):
        """Solve ``h(u, u_j) = v`` for ``u``."""
        return kernels.hinv(self.family, self.theta, v, u_j)

    def sample(self, n: int, rng) -> tuple:
        """Draw ``n`` pairs by conditional inversion; ``rng`` is a :class:`RngStream`."""
        v = rng.uniform(n)
        w = rng.uniform(n)
        return self.h_inverse(w, v), v

    def kendall_tau(self) -> float:
        fam, th = self.family, self.theta
        if fam is CopulaFamily.INDEPENDENCE:
            return 0.0
        if fam is CopulaFamily.GAUSSIAN:
            return 2.0 / math.pi * math.asin(th)
        if fam in (CopulaFamily.CLAYTON, CopulaFamily.CLAYTON180):
            return th / (th + 2.0)
        if fam in (CopulaFamily.GUMBEL, CopulaFamily.GUMBEL180):
            return 1.0 - 1.0 / th
        return 1.0 - 4.0 / th * (1.0 - _debye1(th))

    def to_dict(self) -> dict:
        return {
            "family": self.family.name,
            "theta": self.theta,
            "loglik": self.loglik,
            "aic": self.aic,
            "n_fitted": self.n_fitted,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CopulaModel":
        return cls(
            family=CopulaFamily[d["family"]],
            theta=d.get("theta", 0.0),
            loglik=d.get("loglik", 0.0),
            aic=d.get("aic", 0.0),
            n_fitted=d.get("n_fitted", 0),
        )


def _check_pairs(u, v):
    u = np.asarray(u, dtype=float).ravel()
    v = np.asarray(v, dtype=float).ravel()
    if u.size != v.size:
        raise ValueError("pair columns must have equal length")
    if u.size < MIN_PAIRS:
        raise ValueError(f"need at least {MIN_PAIRS} pairs, got {u.size}")
    if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
        raise ValueError("pairs contain non-finite values")
    if np.ptp(u) == 0.0 or np.ptp(v) == 0.0:
        raise ValueError("degenerate data: a coordinate is constant")
    return u, v


def fit(family, u, v) -> CopulaModel:
    """Maximum-likelihood fit of one family to pseudo-observation pairs.

    The log-likelihood is maximized over the family's parameter interval by
    bounded Brent search (golden-section steps with parabolic refinement).
    """
    family = CopulaFamily(family)
    u, v = _check_pairs(u, v)
    n = u.size
    if family is CopulaFamily.INDEPENDENCE:
        return CopulaModel(family, 0.0, 0.0, 0.0, n)

    def negll(th):
        ll = np.sum(kernels.logpdf(family, th, u, v))
        return -ll if np.isfinite(ll) else np.inf

    lo, hi = family.bounds
    res = optimize.minimize_scalar(negll, bounds=(lo, hi), method="bounded", options={"xatol": FIT_XATOL})
    th = float(res.x)
    if family is CopulaFamily.FRANK and th == 0.0:
        th = 1e-9
    ll = -float(negll(th))
    return CopulaModel(family, th, ll, 2.0 * family.n_params - 2.0 * ll, n)


def select(u, v, families: Iterable = ALL_FAMILIES) -> CopulaModel:
    """Fit every candidate family and return the minimum-AIC model.

    Ties keep the family that comes first in :class:`CopulaFamily` order.
    """
    fams = sorted({CopulaFamily(f) for f in families})
    if not fams:
        raise ValueError("no candidate families")
    best = None
    for fam in fams:
        m = fit(fam, u, v)
        if best is None or m.aic < best.aic:
            best = m
    return best

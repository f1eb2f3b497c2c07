"""The two small networks: the conditional-copula parameter map and the inference distribution.

``ThetaNet`` maps ``u_y`` to the Gaussian-copula parameter
``theta(u_y) = tanh(sum_i w2_i tanh(w1_i u_y + b1_i) + b2)``.

``InferenceNet`` maps ``(u_1, u_2)`` to the parameters ``(a, b)`` of
``R(u_y | u_1, u_2) = sigmoid(a * logit(u_y) + b)``, a distribution on the
unit interval sampled by inverting ``R``.

Both classes keep their parameters as a list of numpy arrays.  The
``forward`` functions take that list, whose items may instead be
:class:`~copulapid.diff.Var` leaves, so the same code runs on or off a tape.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import ClassVar, List, Sequence

import numpy as np

from . import diff as d
from .numerics import EPS, logit, sigmoid, softplus

HIDDEN = 16
INIT_SCALE = 0.1
A_FLOOR = 1e-4


def softplus_inv(y: float) -> float:
    return math.log(math.expm1(y))


# bias on the ``s_a`` output giving ``a = 1`` (a uniform inference distribution)
A_UNIT_BIAS = softplus_inv(1.0 - A_FLOOR)


@dataclass
class _ParamNet:
    params: List[np.ndarray]
    NAMES: ClassVar[tuple] = ()
    KIND: ClassVar[str] = ""

    @property
    def shapes(self):
        return {n: list(p.shape) for n, p in zip(self.NAMES, self.params)}

    @property
    def n_params(self) -> int:
        return int(sum(p.size for p in self.params))

    def flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.params])

    def with_flat(self, vec):
        vec = np.asarray(vec, dtype=float)
        if vec.size != self.n_params:
            raise ValueError(f"expected {self.n_params} values, got {vec.size}")
        out, k = [], 0
        for p in self.params:
            out.append(vec[k:k + p.size].reshape(p.shape).copy())
            k += p.size
        return type(self)(out)

    def copy(self):
        return type(self)([p.copy() for p in self.params])

    def to_dict(self) -> dict:
        return {"kind": self.KIND, "shapes": self.shapes, "params": self.flat().tolist()}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d_: dict):
        if d_.get("kind") != cls.KIND:
            raise ValueError(f"expected kind {cls.KIND!r}, got {d_.get('kind')!r}")
        shapes = d_["shapes"]
        vec = np.asarray(d_["params"], dtype=float)
        out, k = [], 0
        for name in cls.NAMES:
            shape = tuple(shapes[name])
            size = int(np.prod(shape)) if shape else 1
            out.append(vec[k:k + size].reshape(shape).copy())
            k += size
        if k != vec.size:
            raise ValueError("parameter vector length does not match the shape manifest")
        return cls(out)

    @classmethod
    def from_json(cls, s: str):
        return cls.from_dict(json.loads(s))


@dataclass
class ThetaNet(_ParamNet):
    """``theta(u_y)``: one hidden tanh layer of width 16 with per-unit biases (49 parameters)."""

    params: List[np.ndarray] = field(default_factory=list)
    NAMES: ClassVar[tuple] = ("w1", "b1", "w2", "b2")
    KIND: ClassVar[str] = "ThetaNet"

    @classmethod
    def init(cls, rng, hidden: int = HIDDEN, scale: float = INIT_SCALE) -> "ThetaNet":
        """Weights ~ Normal(0, scale²), biases 0; ``rng`` is a :class:`RngStream`."""
        return cls([rng.normal(hidden, scale), np.zeros(hidden), rng.normal(hidden, scale), np.zeros(())])

    @classmethod
    def zeros(cls, hidden: int = HIDDEN) -> "ThetaNet":
        return cls([np.zeros(hidden), np.zeros(hidden), np.zeros(hidden), np.zeros(())])

    @staticmethod
    def forward(params: Sequence, uy):
        """``theta(u_y)`` for any array shape of ``u_y``; differentiable via :mod:`diff`."""
        w1, b1, w2, b2 = params
        shape = np.shape(d.value(uy))
        col = d.reshape(uy, (-1, 1))
        hidden = d.tanh(col * w1 + b1)
        return d.reshape(d.tanh(d.matmul(hidden, w2) + b2), shape)

    def __call__(self, uy):
        return self.forward(self.params, np.asarray(uy, dtype=float))

    def lipschitz_bound(self) -> float:
        """Upper bound on ``|d theta / d u_y|`` (both tanh factors have slope ≤ 1)."""
        w1, _, w2, _ = self.params
        return float(np.sum(np.abs(w1 * w2)))


@dataclass
class InferenceNet(_ParamNet):
    """``(u_1, u_2) -> (a, b)`` through two tanh layers of width 16.

    The inputs are the normal scores ``Φ⁻¹(u_1), Φ⁻¹(u_2)``.  ``a`` is
    ``softplus(s_a) + 1e-4`` so it is always positive.
    """

    params: List[np.ndarray] = field(default_factory=list)
    NAMES: ClassVar[tuple] = ("W1", "b1", "W2", "b2", "wa", "ba", "wb", "bb")
    KIND: ClassVar[str] = "InferenceNet"

    @classmethod
    def init(cls, rng, hidden: int = HIDDEN, scale: float = INIT_SCALE) -> "InferenceNet":
        """Weights ~ Normal(0, scale²); output bias of ``s_a`` set so that ``a`` starts at 1."""
        return cls([
            rng.normal((2, hidden), scale), np.zeros(hidden),
            rng.normal((hidden, hidden), scale), np.zeros(hidden),
            rng.normal(hidden, scale), np.array(A_UNIT_BIAS),
            rng.normal(hidden, scale), np.zeros(()),
        ])

    @classmethod
    def uniform(cls, hidden: int = HIDDEN) -> "InferenceNet":
        """Zero weights: ``a = 1, b = 0`` everywhere, i.e. ``r`` is the uniform density."""
        return cls([
            np.zeros((2, hidden)), np.zeros(hidden), np.zeros((hidden, hidden)), np.zeros(hidden),
            np.zeros(hidden), np.array(A_UNIT_BIAS), np.zeros(hidden), np.zeros(()),
        ])

    @staticmethod
    def forward(params: Sequence, u1, u2):
        """Return ``(a, b)``, each with the (1-D) shape of ``u1``."""
        W1, b1, W2, b2, wa, ba, wb, bb = params
        z1 = d.reshape(d.std_normal_quantile(u1), (-1, 1))
        z2 = d.reshape(d.std_normal_quantile(u2), (-1, 1))
        h1 = d.tanh(z1 * d.getitem(W1, 0) + z2 * d.getitem(W1, 1) + b1)
        h2 = d.tanh(d.matmul(h1, W2) + b2)
        a = d.softplus(d.matmul(h2, wa) + ba) + A_FLOOR
        b = d.matmul(h2, wb) + bb
        return a, b

    def ab(self, u1, u2):
        u1 = np.atleast_1d(np.asarray(u1, dtype=float))
        u2 = np.atleast_1d(np.asarray(u2, dtype=float))
        return self.forward(self.params, u1, u2)

    # The methods below broadcast ``u_y`` / ``eps`` against ``(a, b)``; pass
    # ``uy`` with a trailing axis to evaluate several points per conditioning pair.

    def r_cdf(self, uy, u1, u2):
        a, b = self._ab_like(uy, u1, u2)
        return sigmoid(a * logit(uy) + b)

    def r_logpdf(self, uy, u1, u2):
        a, b = self._ab_like(uy, u1, u2)
        return log_r(logit(uy), a, b)

    def r_density(self, uy, u1, u2):
        return np.exp(self.r_logpdf(uy, u1, u2))

    def r_sample(self, u1, u2, eps):
        a, b = self._ab_like(eps, u1, u2)
        return np.clip(sigmoid(sample_logit(eps, a, b)), EPS, 1.0 - EPS)

    def _ab_like(self, x, u1, u2):
        a, b = self.ab(u1, u2)
        x = np.asarray(x, dtype=float)
        extra = x.ndim - a.ndim
        if extra > 0:
            a = a.reshape(a.shape + (1,) * extra)
            b = b.reshape(b.shape + (1,) * extra)
        return a, b


def sample_logit(eps, a, b):
    """Logit of the inverse-CDF sample: ``z = (logit(eps) - b) / a``, so ``u_y = sigmoid(z)``."""
    return (d.logit(eps) - b) / a


def log_r(z, a, b):
    """Log inference density at ``u_y = sigmoid(z)``, written in terms of ``z``.

    With ``t = a z + b`` the density ``R (1 - R) a / (u_y (1 - u_y))`` has
    logarithm ``-softplus(-t) - softplus(t) + log a + softplus(-z) + softplus(z)``,
    which is finite for every real ``z``.
    """
    t = a * z + b
    # matching terms are paired so the result is exactly log a when t == z
    return (d.softplus(-z) - d.softplus(-t)) + (d.softplus(z) - d.softplus(t)) + d.log(a)


__all__ = ["ThetaNet", "InferenceNet", "sample_logit", "log_r", "softplus", "A_UNIT_BIAS", "A_FLOOR"]

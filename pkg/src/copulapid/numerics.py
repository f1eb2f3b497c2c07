"""Special functions, clamping and random streams shared by all modules.

The normal CDF/quantile are backed by the Cephes routines shipped with
:mod:`scipy.special`; the compiled kernels call the same routines through
``scipy.special.cython_special`` so both code paths agree bit for bit.
"""
from __future__ import annotations

import math

import numpy as np
from scipy import special

EPS = 1e-12
LOG_2PI = math.log(2.0 * math.pi)


def clamp_unit(u):
    """Clamp values into ``[EPS, 1 - EPS]``."""
    return np.clip(u, EPS, 1.0 - EPS)


def _check_finite(x):
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite input")
    return x


def std_normal_cdf(x):
    """Standard normal CDF, saturating at the clamped unit-interval bounds."""
    x = _check_finite(x)
    return clamp_unit(special.ndtr(x))


def std_normal_quantile(u):
    """Inverse standard normal CDF; boundary inputs are clamped first."""
    return special.ndtri(clamp_unit(np.asarray(u, dtype=float)))


def std_normal_logpdf(x):
    x = np.asarray(x, dtype=float)
    return -0.5 * (x * x + LOG_2PI)


def std_normal_pdf(x):
    return np.exp(std_normal_logpdf(x))


def logit(u):
    u = clamp_unit(np.asarray(u, dtype=float))
    return np.log(u) - np.log1p(-u)


def sigmoid(z):
    return special.expit(z)


def softplus(x):
    x = np.asarray(x, dtype=float)
    return np.logaddexp(0.0, x)


def nats_to_bits(x):
    return x / math.log(2.0)


class RngStream:
    """Seeded stream of random draws (PCG64).

    Uniform draws are taken on the open grid ``(k + 1/2) / 2**53`` so they
    never touch 0 or 1.
    """

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._gen = np.random.Generator(np.random.PCG64(self.seed))

    @classmethod
    def derived(cls, seed: int, *keys: int) -> "RngStream":
        """Child stream for job ``keys`` of a master ``seed``."""
        ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, *map(int, keys)])
        return cls(int(ss.generate_state(1, dtype=np.uint64)[0]))

    def uniform(self, size=None):
        k = self._gen.integers(0, 1 << 53, size=size, dtype=np.int64)
        return (k + 0.5) * (1.0 / (1 << 53))

    def normal(self, size=None, scale=1.0):
        return self._gen.normal(0.0, scale, size=size)

    def integers(self, low, high=None, size=None):
        return self._gen.integers(low, high, size=size)

    def permutation(self, n):
        return self._gen.permutation(n)

    @property
    def generator(self) -> np.random.Generator:
        return self._gen

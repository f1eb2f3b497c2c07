"""Empirical-CDF transform of raw observations onto the unit cube."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

MIN_SAMPLES = 50


@dataclass(frozen=True)
class Dataset:
    """Raw trivariate sample: target ``y`` and sources ``x1``, ``x2``."""

    y: np.ndarray
    x1: np.ndarray
    x2: np.ndarray

    def __post_init__(self):
        cols = [np.asarray(c, dtype=float).ravel() for c in (self.y, self.x1, self.x2)]
        if len({c.size for c in cols}) != 1:
            raise ValueError("columns y, x1, x2 must have equal length")
        for name, c in zip(("y", "x1", "x2"), cols):
            if not np.all(np.isfinite(c)):
                raise ValueError(f"column {name} contains non-finite values")
        for name, c in zip(("y", "x1", "x2"), cols):
            object.__setattr__(self, name, c)

    @property
    def n(self) -> int:
        return self.y.size

    def swap_sources(self) -> "Dataset":
        return Dataset(self.y, self.x2, self.x1)

    def check_size(self, minimum: int = MIN_SAMPLES):
        if self.n < minimum:
            raise ValueError(f"need at least {minimum} samples, got {self.n}")


@dataclass(frozen=True)
class PseudoDataset:
    """Pseudo-observations ``(u_y, u_1, u_2)``, each column in (0, 1)."""

    uy: np.ndarray
    u1: np.ndarray
    u2: np.ndarray

    @property
    def n(self) -> int:
        return self.uy.size

    def swap_sources(self) -> "PseudoDataset":
        return PseudoDataset(self.uy, self.u2, self.u1)


def ranks_to_unit(x) -> np.ndarray:
    """Average ranks of ``x`` divided by ``n + 1``."""
    x = np.asarray(x, dtype=float)
    return rankdata(x, method="average") / (x.size + 1.0)


def pseudo_observations(data: Dataset) -> PseudoDataset:
    """Map each column through its empirical CDF.

    Ties receive average ranks; normalizing by ``D + 1`` keeps every value
    strictly inside the unit interval.
    """
    return PseudoDataset(ranks_to_unit(data.y), ranks_to_unit(data.x1), ranks_to_unit(data.x2))

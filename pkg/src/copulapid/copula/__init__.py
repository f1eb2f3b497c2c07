"""Bivariate copulas: densities, h-functions and their inverses, fitting and selection."""
from .kernels import BACKEND, available_backends, use_backend
from .model import ALL_FAMILIES, CopulaFamily, CopulaModel, fit, select

__all__ = [
    "ALL_FAMILIES",
    "BACKEND",
    "CopulaFamily",
    "CopulaModel",
    "available_backends",
    "fit",
    "select",
    "use_backend",
]

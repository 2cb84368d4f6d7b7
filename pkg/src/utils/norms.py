"""
Process-wide norm configuration

Voronoi cells, maximal functions and tail criteria all depend on the norm of
R^d; every module reads it from here.
"""

import math
from contextlib import contextmanager
from typing import Iterator

import numpy as np

from utils.errors import PreconditionError

NORMS = ("euclidean", "sup")

_active = "euclidean"


def current_norm() -> str:
    return _active


def set_norm(norm_id: str) -> None:
    """Select the norm used by every subsequent computation."""
    global _active
    if norm_id not in NORMS:
        raise PreconditionError(f"unknown norm '{norm_id}', expected one of {NORMS}")
    _active = norm_id


@contextmanager
def use_norm(norm_id: str) -> Iterator[str]:
    previous = _active
    set_norm(norm_id)
    try:
        yield norm_id
    finally:
        set_norm(previous)


def minkowski_p(norm_id: str = None) -> float:
    """Minkowski exponent for scipy.spatial queries."""
    return 2.0 if (norm_id or _active) == "euclidean" else np.inf


def norm(x: np.ndarray, norm_id: str = None) -> np.ndarray:
    """Norm of each row of `x` (last axis is the coordinate axis)."""
    x = np.asarray(x, dtype=float)
    if (norm_id or _active) == "euclidean":
        return np.sqrt(np.sum(x * x, axis=-1))
    return np.max(np.abs(x), axis=-1)


def ball_volume(radius, d: int, norm_id: str = None):
    """Lebesgue measure of the closed ball of `radius` in R^d."""
    radius = np.asarray(radius, dtype=float)
    if (norm_id or _active) == "euclidean":
        unit = math.pi ** (d / 2) / math.gamma(d / 2 + 1)
    else:
        unit = 2.0 ** d
    return unit * radius ** d

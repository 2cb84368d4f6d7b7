"""
L^r point density of a distribution

f_r = f^{d/(d+r)} / ∫ f^{d/(d+r)} is the weak limit of the empirical measure of
L^r-optimal codebooks. In 1-D its cdf is tabulated once per (density, r) and
inverted by bracketed root finding.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Tuple

import numpy as np
from scipy import optimize

from distributions.base import QUAD_EPSREL, Density, quad
from distributions.catalog import Normal, Uniform
from utils.errors import PreconditionError

log = logging.getLogger(__name__)

TABLE_SIZE = 513
TABLE_MASS = 1e-12

_tables: Dict[Tuple[str, float], "_Table"] = {}


@dataclass
class PointDensity:
    density_id: str
    r: float
    theta: float
    normalizer: float
    pdf: Callable[[np.ndarray], np.ndarray]
    cdf: Optional[Callable[[np.ndarray], np.ndarray]] = None
    ppf: Optional[Callable[[np.ndarray], np.ndarray]] = None
    meta: dict = field(default_factory=dict)


class _Table:
    """Tabulated cdf of f^θ/Z with exact tails."""

    def __init__(self, density: Density, theta: float, normalizer: float):
        self.density = density
        self.theta = theta
        self.normalizer = normalizer
        lo, hi = density.support.interval()
        self.lo, self.hi = lo, hi
        u = np.linspace(TABLE_MASS, 1 - TABLE_MASS, TABLE_SIZE)
        nodes = np.concatenate([density.ppf(u), list(density.breakpoints())])
        if np.isfinite(lo):
            nodes = np.append(nodes, lo)
        if np.isfinite(hi):
            nodes = np.append(nodes, hi)
        nodes = np.unique(nodes[np.isfinite(nodes)])
        self.nodes = nodes[(nodes >= lo) & (nodes <= hi)]

        head = self._piece(lo, self.nodes[0]) if np.isinf(lo) else 0.0
        panels = [self._piece(a, b) for a, b in zip(self.nodes[:-1], self.nodes[1:])]
        self.values = head + np.concatenate([[0.0], np.cumsum(panels)])
        tail = self._piece(self.nodes[-1], hi) if np.isinf(hi) else 0.0
        total = self.values[-1] + tail
        if abs(total - 1.0) > 1e-8:
            log.warning("point density of %s: table integrates to %.12g", density.id, total)

    def _integrand(self, x: float) -> float:
        return math.exp(self.theta * float(self.density.logpdf(x))) / self.normalizer

    def _piece(self, a: float, b: float) -> float:
        if a >= b:
            return 0.0
        points = [p for p in self.density.breakpoints() if a < p < b]
        return quad(self._integrand, a, b, points=points, epsabs=0.0, epsrel=QUAD_EPSREL).value

    def cdf(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        flat = np.atleast_1d(x).ravel()
        out = np.empty_like(flat)
        for i, xi in enumerate(flat):
            out[i] = self._cdf_scalar(float(xi))
        out = np.clip(out, 0.0, 1.0)
        return out.reshape(x.shape) if x.ndim else float(out[0])

    def _cdf_scalar(self, x: float) -> float:
        if x <= self.lo:
            return 0.0
        if x >= self.hi:
            return 1.0
        if x < self.nodes[0]:
            return self._piece(self.lo, x)
        k = int(np.searchsorted(self.nodes, x, side="right")) - 1
        return float(self.values[k]) + self._piece(float(self.nodes[k]), x)

    def ppf(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        flat = np.atleast_1d(u).ravel()
        out = np.array([self._ppf_scalar(float(v)) for v in flat])
        return out.reshape(u.shape) if u.ndim else float(out[0])

    def _ppf_scalar(self, v: float) -> float:
        if v <= 0.0:
            return self.lo
        if v >= 1.0:
            return self.hi
        k = int(np.searchsorted(self.values, v, side="right")) - 1
        if k < 0:
            a, b = self._expand(float(self.nodes[0]), -1.0, v)
        elif k >= len(self.nodes) - 1:
            a, b = self._expand(float(self.nodes[-1]), 1.0, v)
        else:
            a, b = float(self.nodes[k]), float(self.nodes[k + 1])
        return optimize.brentq(lambda x: self._cdf_scalar(x) - v, a, b, xtol=1e-14, rtol=4 * np.finfo(float).eps)

    def _expand(self, start: float, direction: float, v: float):
        """Bracket a quantile beyond the table."""
        step = max(1.0, abs(start))
        other = start
        for _ in range(2000):
            other = start + direction * step
            if (self._cdf_scalar(other) - v) * direction >= 0:
                break
            step *= 2.0
        return (other, start) if direction < 0 else (start, other)


def point_density_cdf(density: Density, r: float) -> PointDensity:
    """Normalized point density f_r, with cdf and quantiles in dimension 1."""
    if r <= 0:
        raise PreconditionError("r must be positive")
    d = density.dim
    theta = d / (d + r)
    normalizer = density.power_integral(theta)
    if not math.isfinite(normalizer):
        raise PreconditionError(f"∫f^{theta:g} diverges for {density.id}")

    def pdf(x):
        with np.errstate(under="ignore"):
            return np.exp(theta * density.logpdf(x)) / normalizer

    result = PointDensity(density.id, r, theta, normalizer, pdf)
    if d != 1:
        return result

    if isinstance(density, Normal):
        scale = density.sigma * math.sqrt(1.0 / theta)
        wide = Normal(sigma=scale)
        result.cdf, result.ppf = wide.cdf, wide.ppf
        result.meta["closed_form"] = f"normal(sigma={scale!r})"
    elif isinstance(density, Uniform):
        result.cdf, result.ppf = density.cdf, density.ppf
        result.meta["closed_form"] = density.id
    else:
        key = (density.id, float(r))
        if key not in _tables:
            _tables[key] = _Table(density, theta, normalizer)
        table = _tables[key]
        result.cdf, result.ppf = table.cdf, table.ppf
        result.meta["table_nodes"] = int(table.nodes.size)
    return result

"""
Scalar L^r-optimal quantizers

Lloyd's fixed point on the stationarity equation
    ∫_{V_k} |α_k - x|^{r-1} sign(α_k - x) f(x) dx = 0,
polished by damped Newton steps on the tridiagonal Jacobian, plus exact
per-cell distortion integrals.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Iterator, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg, optimize

from asymptotics.point_density import point_density_cdf
from distributions.base import Density, SupportDescriptor, quad
from distributions.catalog import Uniform
from utils.errors import CodebookError, PreconditionError
from utils.rng import stream

log = logging.getLogger(__name__)

CELL_EPSREL = 1e-10
ROOT_XTOL = 1e-13
DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 100_000
NEWTON_AFTER = 3
NEWTON_HALVINGS = 40
MAX_NEWTON_FAILURES = 5
RESTARTS = 5
WEIGHT_TOLERANCE = 1e-9


@dataclass
class Codebook1D:
    points: np.ndarray
    r: float
    density_id: str
    weights: np.ndarray
    residual: float = 0.0
    converged: bool = True
    iterations: int = 0
    meta: Dict[str, object] = field(default_factory=dict)

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float)
        self.weights = np.asarray(self.weights, dtype=float)
        if self.points.ndim != 1 or self.points.size == 0:
            raise CodebookError("a codebook needs at least one point")
        if not np.all(np.isfinite(self.points)):
            raise CodebookError("codebook points must be finite")
        if np.any(np.diff(self.points) <= 0):
            raise CodebookError("codebook points must be strictly increasing")
        if self.weights.shape != self.points.shape:
            raise CodebookError("one weight per point is required")
        if np.any(self.weights <= 0):
            raise CodebookError("every Voronoi cell needs positive probability")
        if abs(math.fsum(self.weights) - 1.0) > WEIGHT_TOLERANCE:
            raise CodebookError(f"weights sum to {math.fsum(self.weights)!r}, not 1")

    @property
    def n(self) -> int:
        return int(self.points.size)

    def boundaries(self) -> np.ndarray:
        """Voronoi boundaries (midpoints between neighbours)."""
        return 0.5 * (self.points[:-1] + self.points[1:])


# cell integrals -------------------------------------------------------------


def _edges(points: np.ndarray, density: Density) -> np.ndarray:
    lo, hi = density.support.interval()
    return np.concatenate([[lo], 0.5 * (points[:-1] + points[1:]), [hi]])


def _one_side(density: Density, a: float, end: float, p: float) -> float:
    """∫ |x - a|^p f(x) dx between a and end (end may be infinite)."""
    if end == a:
        return 0.0
    direction = 1.0 if end > a else -1.0
    inner = sorted((b for b in density.breakpoints() if min(a, end) < b < max(a, end)),
                   key=lambda b: abs(b - a))
    if not inner and math.isinf(end):
        inner = [a + direction * max(1.0, abs(a))]
    cuts = [a, *inner, end]
    pdf = lambda x: float(density.pdf(x))
    total = 0.0
    for i, (u, v) in enumerate(zip(cuts[:-1], cuts[1:])):
        lo, hi = min(u, v), max(u, v)
        if i == 0 and p != 0:
            wvar = (p, 0.0) if direction > 0 else (0.0, p)
            res = quad(pdf, lo, hi, epsabs=0.0, epsrel=CELL_EPSREL, weight="alg", wvar=wvar)
        else:
            res = quad(lambda x: abs(x - a) ** p * pdf(x), lo, hi, epsabs=0.0, epsrel=CELL_EPSREL)
        total += res.value
    return total


def cell_sides(density: Density, points: np.ndarray, edges: np.ndarray, p: float
               ) -> Tuple[np.ndarray, np.ndarray]:
    """Per cell, ∫_{lo}^{α} (α - x)^p f and ∫_{α}^{hi} (x - α)^p f."""
    if isinstance(density, Uniform):
        return density.cell_sides(points, edges[:-1], edges[1:], p)
    left = np.array([_one_side(density, a, lo, p) for a, lo in zip(points, edges[:-1])])
    right = np.array([_one_side(density, a, hi, p) for a, hi in zip(points, edges[1:])])
    return left, right


def _check_support(points: np.ndarray, density: Density) -> None:
    lo, hi = density.support.interval()
    if points[0] < lo or points[-1] > hi:
        raise CodebookError(f"codebook leaves the support [{lo}, {hi}] of {density.id}")


def from_points(points: Sequence[float], density: Density, r: float, **kwargs) -> Codebook1D:
    """Wrap a point set, computing the cell probabilities under `density`."""
    points = np.asarray(points, dtype=float)
    if points.size > 1 and np.any(np.diff(points) <= 0):
        raise CodebookError("codebook points must be strictly increasing")
    _check_support(points, density)
    edges = _edges(points, density)
    weights = density.mass(edges[:-1], edges[1:])
    return Codebook1D(points, r, density.id, weights, **kwargs)


def midpoint_grid(n: int, r: float = 2.0) -> Codebook1D:
    """{(2k-1)/(2n)}: the L^r-optimal n-quantizer of U([0,1]) for every r."""
    if n < 1:
        raise PreconditionError("n must be at least 1")
    points = (2 * np.arange(1, n + 1) - 1) / (2 * n)
    return Codebook1D(points, r, Uniform().id, np.full(n, 1.0 / n),
                      meta={"construction": "midpoint"})


def distortion1d(codebook: Codebook1D, density: Density, s: float) -> float:
    """∫ min_k |x - α_k|^s f(x) dx by exact per-cell integrals."""
    if s <= 0:
        raise PreconditionError("s must be positive")
    if density.dim != 1:
        raise PreconditionError("distortion1d needs a 1-D density")
    _check_support(codebook.points, density)
    if not density.support.bounded and s >= density.moment_order_limit:
        log.warning("distortion1d(%s, s=%g): tail integral diverges (moments exist below %g)",
                    density.id, s, density.moment_order_limit)
        return math.inf
    left, right = cell_sides(density, codebook.points, _edges(codebook.points, density), s)
    return math.fsum(left) + math.fsum(right)


def stationarity_residual(codebook: Codebook1D, density: Density, r: float) -> np.ndarray:
    """Per-cell ∫_{V_k} |α_k - x|^{r-1} sign(α_k - x) f(x) dx."""
    if r < 1:
        raise PreconditionError("stationarity residuals need r >= 1")
    return _residual(density, codebook.points, r)


def _residual(density: Density, points: np.ndarray, r: float) -> np.ndarray:
    edges = _edges(points, density)
    if r == 2:
        mass, first = density.partial_moments(edges[:-1], edges[1:])
        return points * mass - first
    left, right = cell_sides(density, points, edges, r - 1)
    return left - right


def cell_spread(codebook: Codebook1D, support) -> float:
    """max/min of the gaps α¹-a, Δα^k, b-αⁿ over a compact support [a, b]."""
    if isinstance(support, SupportDescriptor):
        if not support.bounded:
            raise PreconditionError("cell spread needs a compact support")
        support = support.interval()
    a, b = support
    if not a < b:
        raise PreconditionError(f"degenerate support [{a}, {b}]")
    gaps = np.diff(np.concatenate([[a], codebook.points, [b]]))
    if np.any(gaps <= 0):
        raise PreconditionError("codebook points must lie strictly inside the support")
    return float(gaps.max() / gaps.min())


# Lloyd ----------------------------------------------------------------------


class LloydSolver:
    """Fixed-point and Newton iterations for one (density, r) pair."""

    def __init__(self, density: Density, r: float, tol: float = DEFAULT_TOL,
                 max_iter: int = DEFAULT_MAX_ITER):
        if density.dim != 1:
            raise PreconditionError("lloyd1d needs a 1-D density")
        if r < 1:
            raise PreconditionError("lloyd1d needs r >= 1; use train_nd(method='clvq') for r < 1")
        if r >= density.moment_order_limit:
            raise PreconditionError(f"{density.id} has no finite moment of order {r}")
        self.density = density
        self.r = float(r)
        self.tol = tol
        self.max_iter = max_iter
        self.lo, self.hi = density.support.interval()

    def initial_points(self, n: int, jitter: Optional[np.random.Generator] = None) -> np.ndarray:
        """Quantiles of the point density at (2k-1)/(2n), or stratified draws."""
        u = (np.arange(n) + (0.5 if jitter is None else jitter.random(n))) / n
        points = np.asarray(point_density_cdf(self.density, self.r).ppf(u), dtype=float)
        return self._repair(np.atleast_1d(points))

    def _repair(self, points: np.ndarray) -> np.ndarray:
        points = np.clip(points, self.lo, self.hi)
        if self.density.symmetric:
            points = 0.5 * (points - points[::-1])
        return points

    def _ordered(self, points: np.ndarray) -> bool:
        return (bool(np.all(np.diff(points) > 0)) and points[0] > self.lo
                and points[-1] < self.hi and bool(np.all(np.isfinite(points))))

    def sweep(self, points: np.ndarray) -> np.ndarray:
        """One Lloyd update: per-cell root of the stationarity equation."""
        edges = _edges(points, self.density)
        if self.r == 2:
            mass, first = self.density.partial_moments(edges[:-1], edges[1:])
            new = first / mass
        elif self.r == 1:
            mass = self.density.cdf(edges)
            new = self.density.ppf(0.5 * (mass[:-1] + mass[1:]))
        else:
            new = np.array([self._cell_root(lo, hi, a) for lo, hi, a in zip(edges[:-1], edges[1:], points)])
        return self._repair(new)

    def _cell_root(self, lo: float, hi: float, guess: float) -> float:
        p = self.r - 1

        def g(a):
            return _one_side(self.density, a, lo, p) - _one_side(self.density, a, hi, p)

        a_lo = lo if math.isfinite(lo) else self._bracket(g, guess, -1.0)
        a_hi = hi if math.isfinite(hi) else self._bracket(g, guess, 1.0)
        g_lo, g_hi = g(a_lo), g(a_hi)
        if g_lo >= 0:
            return a_lo
        if g_hi <= 0:
            return a_hi
        width = a_hi - a_lo
        return optimize.brentq(g, a_lo, a_hi, xtol=max(ROOT_XTOL * width, 1e-300))

    @staticmethod
    def _bracket(g, start: float, direction: float) -> float:
        step = max(1.0, abs(start))
        for _ in range(200):
            point = start + direction * step
            if g(point) * direction > 0:
                return point
            step *= 2.0
        raise PreconditionError("could not bracket the stationarity root of an unbounded cell")

    def _jacobian(self, points: np.ndarray) -> np.ndarray:
        """Banded (1, 1) storage of d residual / d points."""
        edges = _edges(points, self.density)
        inner = edges[1:-1]
        half = 0.5 * np.diff(points)
        f_mid = self.density.pdf(inner) if inner.size else np.empty(0)
        r = self.r
        if r == 2:
            mass = self.density.mass(edges[:-1], edges[1:])
            diag = mass.copy()
            coupling = 0.5 * half * f_mid
        elif r == 1:
            diag = 2.0 * self.density.pdf(points)
            coupling = 0.5 * f_mid
        else:
            left, right = cell_sides(self.density, points, edges, r - 2)
            diag = (r - 1) * (left + right)
            coupling = 0.5 * half ** (r - 1) * f_mid
        diag = diag.astype(float)
        diag[:-1] -= coupling
        diag[1:] -= coupling
        bands = np.zeros((3, points.size))
        bands[0, 1:] = -coupling
        bands[1] = diag
        bands[2, :-1] = -coupling
        return bands

    def newton(self, points: np.ndarray, residual: np.ndarray) -> Optional[np.ndarray]:
        """Damped Newton step; None when no step size reduces the residual."""
        try:
            step = linalg.solve_banded((1, 1), self._jacobian(points), -residual)
        except (linalg.LinAlgError, ValueError):
            return None
        if not np.all(np.isfinite(step)):
            return None
        size = 1.0
        base = float(np.max(np.abs(residual)))
        for _ in range(NEWTON_HALVINGS):
            trial = self._repair(points + size * step)
            if self._ordered(trial) or (trial.size == 1 and self.lo < trial[0] < self.hi):
                if float(np.max(np.abs(_residual(self.density, trial, self.r)))) < base:
                    return trial
            size *= 0.5
        return None

    def iterates(self, points: np.ndarray) -> Iterator[np.ndarray]:
        while True:
            points = self.sweep(points)
            yield points

    def run(self, points: np.ndarray) -> Tuple[np.ndarray, int, bool]:
        failures = 0
        for it in range(1, self.max_iter + 1):
            new = None
            if it > NEWTON_AFTER and failures < MAX_NEWTON_FAILURES and points.size > 1:
                new = self.newton(points, _residual(self.density, points, self.r))
                if new is None:
                    failures += 1
            if new is None:
                new = self.sweep(points)
            move = float(np.max(np.abs(new - points)))
            points = new
            if move < self.tol * max(1.0, float(np.max(np.abs(points)))):
                return points, it, True
            if it % 1000 == 0:
                log.debug("lloyd %s n=%d r=%g: iteration %d, move %.3e",
                          self.density.id, points.size, self.r, it, move)
        return points, self.max_iter, False


def _finish(solver: LloydSolver, points: np.ndarray, iterations: int, converged: bool,
            seed: Optional[int]) -> Codebook1D:
    residual = _residual(solver.density, points, solver.r)
    return from_points(points, solver.density, solver.r,
                       residual=float(np.max(np.abs(residual))), converged=converged,
                       iterations=iterations, meta={"seed": seed})


def lloyd1d(density: Density, n: int, r: float = 2.0, tol: float = DEFAULT_TOL,
            max_iter: int = DEFAULT_MAX_ITER, seed: Optional[int] = 0) -> Codebook1D:
    """L^r-stationary n-quantizer of a 1-D density.

    Starts at the quantiles of the point density; non-log-concave densities
    get extra stratified restarts and the lowest L^r distortion wins.
    """
    if n < 1:
        raise PreconditionError("n must be at least 1")
    solver = LloydSolver(density, r, tol, max_iter)
    starts = [solver.initial_points(n)]
    if not density.log_concave and n > 1:
        starts += [solver.initial_points(n, stream(seed or 0, "lloyd-restart", i))
                   for i in range(1, RESTARTS)]

    best, best_value = None, math.inf
    for i, start in enumerate(starts):
        points, iterations, converged = solver.run(start)
        book = _finish(solver, points, iterations, converged, seed)
        value = distortion1d(book, density, r) if len(starts) > 1 else 0.0
        log.debug("lloyd %s n=%d r=%g start %d: %d iterations, distortion %.12g",
                  density.id, n, r, i, iterations, value)
        if best is None or value < best_value:
            best, best_value = book, value
    if not best.converged:
        log.warning("lloyd %s n=%d r=%g stopped after %d iterations (residual %.3e)",
                    density.id, n, r, best.iterations, best.residual)
    return best


def lloyd_iterates(density: Density, n: int, r: float = 2.0,
                   init: Optional[Sequence[float]] = None) -> Iterator[Codebook1D]:
    """Codebook after each plain Lloyd sweep, without Newton polishing."""
    solver = LloydSolver(density, r)
    points = solver.initial_points(n) if init is None else np.asarray(init, dtype=float)
    for count, points in enumerate(solver.iterates(points), start=1):
        yield from_points(points, density, r, iterations=count, converged=False)

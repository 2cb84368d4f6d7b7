"""
Maximal-function estimates and tail criteria for the L^s rate of L^r quantizers

ψ_b(x) = sup_n λ_d(B(x, b·d(x,α_n))) / P(B(x, b·d(x,α_n))) controls the rate;
criterion_check decides from the tail metadata of a density which sufficient
condition (radial tail, growth control, super-critical ϑ-search) holds.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.spatial import cKDTree

from distributions.base import Density, GrowthControl, TailCriterion, quad
from quantizer.scalar import Codebook1D
from quantizer.vector import CodebookND, nearest
from utils.errors import PreconditionError
from utils.norms import ball_volume, minkowski_p
from utils.rng import stream

log = logging.getLogger(__name__)

C_VALUES = (1.01, 1.05, 1.09, 1.1, 1.25, 1.5)
GRID_POINTS = 401
GRID_MASS = 1e-6
FAR_RADIUS = 1e6
SLOPE_TOL = 1e-6
THETA_STEPS = 49
GROWTH_POINTS = 400
GROWTH_NEIGHBOURS = 101
BALL_SAMPLES = 200_000


@dataclass
class MaximalFunctionEstimate:
    b: float
    exponent: float
    grid: np.ndarray
    values: np.ndarray
    criterion_integral: float
    stderr: float
    samples: int
    infinite_points: int = 0


@dataclass
class CriterionReport:
    kind: str
    density_id: str
    r: float
    s: float
    explanation: str
    tested_c: Tuple[float, ...] = ()
    passing_c: Tuple[float, ...] = ()
    integral: Optional[float] = None
    growth_ratio: Optional[float] = None
    theta_range: Optional[Tuple[float, float]] = None
    rate_exponents: Optional[Tuple[float, float]] = None
    admitted_theta: List[float] = field(default_factory=list)


# maximal function -----------------------------------------------------------


def _ball_ratio(volume: np.ndarray, mass: np.ndarray, radius: np.ndarray) -> np.ndarray:
    """λ(B)/P(B) with 0/0 := 0 and x/0 := +inf."""
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(mass > 0, volume / np.where(mass > 0, mass, 1.0), np.inf)
    return np.where(radius > 0, ratio, 0.0)


class _BallMasses:
    """P(B(x, ρ)) from the cdf in 1-D or from a reference sample otherwise."""

    def __init__(self, density: Density, seed: int, samples: int = BALL_SAMPLES):
        self.density = density
        self.tree = None
        if density.dim > 1:
            reference = density.draw(stream(seed, "balls"), samples)
            self.tree = cKDTree(reference)
            self.samples = samples

    def __call__(self, x: np.ndarray, radius: np.ndarray) -> np.ndarray:
        if self.tree is None:
            return np.maximum(self.density.mass(x - radius, x + radius), 0.0)
        counts = self.tree.query_ball_point(x, radius, p=minkowski_p(), return_length=True)
        return np.asarray(counts, dtype=float) / self.samples


def _psi(x: np.ndarray, quantizers: Sequence, b: float, masses: _BallMasses, d: int) -> np.ndarray:
    psi = np.zeros(len(x))
    for book in quantizers:
        _, dist = nearest(book, x if d > 1 else x[:, None])
        radius = b * np.asarray(dist, dtype=float)
        ratio = _ball_ratio(ball_volume(radius, d), masses(x, radius), radius)
        psi = np.maximum(psi, ratio)
    return psi


def default_grid(density: Density, seed: int = 0) -> np.ndarray:
    """401 equispaced points over the central 1-1e-6 mass, or sampled points in d >= 2."""
    if density.dim == 1:
        lo, hi = density.ppf(np.array([GRID_MASS / 2, 1 - GRID_MASS / 2]))
        return np.linspace(lo, hi, GRID_POINTS)
    return density.draw(stream(seed, "psi-grid"), GRID_POINTS)


def maximal_function_estimate(
    density: Density,
    quantizers: Sequence[Union[Codebook1D, CodebookND]],
    b: float,
    x_grid: Optional[np.ndarray] = None,
    s: Optional[float] = None,
    r: Optional[float] = None,
    m: int = 20_000,
    seed: int = 0,
) -> MaximalFunctionEstimate:
    """ψ̂_b over a grid and the MC estimate of ∫ ψ̂_b^{s/(d+r)} dP."""
    if not 0 < b < 0.5:
        raise PreconditionError("b must lie in (0, 1/2)")
    if not quantizers:
        raise PreconditionError("maximal function needs at least one quantizer")
    d = density.dim
    r = quantizers[0].r if r is None else r
    s = r if s is None else s
    exponent = s / (d + r)
    masses = _BallMasses(density, seed)

    grid = default_grid(density, seed) if x_grid is None else np.asarray(x_grid, dtype=float)
    grid = grid.reshape(-1) if d == 1 else grid.reshape(-1, d)
    values = _psi(grid, quantizers, b, masses, d)

    points = density.draw(stream(seed, "psi-integral"), m)
    points = points.reshape(-1) if d == 1 else points.reshape(-1, d)
    terms = _psi(points, quantizers, b, masses, d) ** exponent
    if np.any(np.isinf(terms)):
        integral, stderr = math.inf, math.inf
    else:
        integral = float(terms.mean())
        stderr = float(terms.std(ddof=1) / math.sqrt(m))
    infinite = int(np.sum(np.isinf(values)))
    if infinite:
        log.info("maximal function: %d grid points with empty ball mass", infinite)
    return MaximalFunctionEstimate(b, exponent, grid, values, integral, stderr, m, infinite)


# tail criteria --------------------------------------------------------------


def _radial_log_integrand(tail: TailCriterion, d: int, kappa: float, c: float, theta: float):
    power = theta + d - 1

    def g(t):
        t = np.asarray(t, dtype=float)
        value = tail.log_profile(t) - kappa * tail.log_profile(c * t)
        if power:
            value = value + power * np.log(t)
        return value

    return g


def _radial_finite(tail: TailCriterion, d: int, kappa: float, c: float, theta: float = 0.0
                   ) -> Tuple[bool, Optional[float]]:
    """Decide ∫_{‖x‖₀ > N} h(c‖x‖₀)^{-κ} ‖x‖₀^ϑ dP < ∞ from the far-tail log-log slope."""
    g = _radial_log_integrand(tail, d, kappa, c, theta)
    start = max(tail.radius, 1.0)
    t1 = FAR_RADIUS * start
    with np.errstate(all="ignore"):
        slope = float((math.log(2.0) + g(2 * t1) - g(t1)) / math.log(2.0))
    if not slope < -SLOPE_TOL:
        return False, None
    try:
        with np.errstate(all="ignore"):
            res = quad(lambda t: math.exp(float(g(t))), max(tail.radius, 0.0), math.inf,
                       epsabs=1e-12, epsrel=1e-8)
    except OverflowError:
        return True, None
    if not math.isfinite(res.value):
        return False, None
    sides = 1.0 if tail.norm_id == "identity" or d > 1 else 2.0
    return True, sides * res.value


def growth_ratio(density: Density, gc: GrowthControl) -> float:
    """min f(y)/f(x)^{1+ε} over grid pairs with ‖x‖ >= M, |y-x| <= 2η‖x‖."""
    if density.dim != 1:
        raise PreconditionError("growth control is verified on a 1-D grid only")
    hi = float(density.window().hi)
    xs = np.linspace(gc.M, max(hi, 1.5 * gc.M), GROWTH_POINTS)
    log_fx = density.logpdf(xs)
    worst = math.inf
    for x, lfx in zip(xs, log_fx):
        if not np.isfinite(lfx):
            continue
        ys = np.linspace(x - 2 * gc.eta * abs(x), x + 2 * gc.eta * abs(x), GROWTH_NEIGHBOURS)
        log_fy = density.logpdf(ys)
        log_fy = log_fy[np.isfinite(log_fy)]
        if log_fy.size:
            worst = min(worst, float(log_fy.min()) - (1 + gc.eps) * float(lfx))
    return math.exp(worst) if math.isfinite(worst) else math.inf


def _weighted_power_finite(density: Density, exponent: float, theta: float, lo: float
                           ) -> Tuple[bool, Optional[float]]:
    """Finiteness of ∫_{x >= lo} f^{1-exponent} |x|^ϑ dλ by growing truncation windows."""
    if theta == 0.0 and lo <= density.support.interval()[0]:
        value = density.power_integral(1.0 - exponent)
        return math.isfinite(value), value if math.isfinite(value) else None

    def integrand(x):
        return math.exp((1.0 - exponent) * float(density.logpdf(x))) * abs(x) ** theta

    partials = []
    for mass in (1e-6, 1e-9, 1e-12):
        hi = float(density.window(mass).hi)
        points = [p for p in density.breakpoints() if lo < p < hi]
        partials.append(quad(integrand, lo, hi, points=points, epsabs=1e-14, epsrel=1e-8).value)
    last_step = partials[2] - partials[1]
    finite = math.isfinite(partials[2]) and last_step <= 1e-3 * max(partials[2], 1e-300)
    return finite, partials[2] if finite else None


def _supercritical(density: Density, r: float, s: float) -> CriterionReport:
    d = density.dim
    tail = density.tail
    thetas = np.linspace(s - (d + r), s, THETA_STEPS + 2)[1:-1]
    admitted: List[float] = []
    for theta in thetas:
        kappa = (s - theta) / (d + r)
        if tail.log_profile is not None:
            if any(_radial_finite(tail, d, kappa, c, float(theta))[0] for c in C_VALUES):
                admitted.append(float(theta))
        elif tail.growth_control is not None:
            gc = tail.growth_control
            if _weighted_power_finite(density, kappa * (1 + gc.eps), float(theta), gc.M)[0]:
                admitted.append(float(theta))
    report = CriterionReport("supercritical", density.id, r, s,
                             "s >= d + r: searched ϑ in (s-(d+r), s) with the radial or growth form",
                             tested_c=C_VALUES, admitted_theta=admitted)
    if admitted:
        report.theta_range = (min(admitted), max(admitted))
        report.rate_exponents = ((s - max(admitted)) / d, (s - min(admitted)) / d)
    else:
        report.kind = "none"
        report.explanation = "no ϑ in (s-(d+r), s) makes the super-critical integral finite"
    return report


def criterion_check(density: Density, r: float, s: float) -> CriterionReport:
    """Which sufficient condition for sup_n n^{s/d} ∫ d(x,α_n)^s dP < ∞ holds."""
    d = density.dim
    tail = density.tail
    if tail is None or (tail.log_profile is None and tail.growth_control is None):
        return CriterionReport("none", density.id, r, s, f"{density.id} carries no tail metadata")
    if r >= density.moment_order_limit:
        return CriterionReport("none", density.id, r, s, f"no moment of order r={r} beyond which to work")
    if s >= d + r:
        return _supercritical(density, r, s)

    kappa = s / (d + r)
    if tail.log_profile is not None:
        passing, integral = [], None
        for c in C_VALUES:
            finite, value = _radial_finite(tail, d, kappa, c)
            if finite:
                passing.append(c)
                integral = value
        kind = "cor3-applies" if passing else "none"
        explanation = (f"∫ f(cx)^(-{kappa:.4g}) dP finite for c in {tuple(passing)}" if passing
                       else "radial integral diverges for every tested c > 1")
        return CriterionReport(kind, density.id, r, s, explanation, C_VALUES, tuple(passing), integral)

    gc = tail.growth_control
    ratio = growth_ratio(density, gc)
    peak = tail.peak_constant or 0.0
    report = CriterionReport("none", density.id, r, s, "", growth_ratio=ratio)
    if ratio < gc.C:
        report.explanation = f"growth control fails on the grid: min ratio {ratio:.3g} < C={gc.C}"
    elif peak <= 0:
        report.explanation = "support may have a peak (no positive κ_f declared)"
    elif s * (1 + gc.eps) >= d + r:
        report.explanation = f"s(1+ε) = {s * (1 + gc.eps):.4g} is not below d + r"
    else:
        finite, value = _weighted_power_finite(density, kappa * (1 + gc.eps), 0.0, density.support.interval()[0])
        report.integral = value
        if finite:
            report.kind = "cor4-applies"
            report.explanation = (f"growth ratio {ratio:.3g} >= C={gc.C} and "
                                  f"∫ f^(-{kappa * (1 + gc.eps):.4g}) dP finite")
        else:
            report.explanation = "∫ f^{-s(1+ε)/(d+r)} dP diverges"
    return report

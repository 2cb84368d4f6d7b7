"""
Probability densities on R^d

A Density is immutable once built. It evaluates pdf/cdf, draws seeded samples
and integrates moments and powers f^θ of itself; families override the
generic quadrature paths with closed forms where they have them.
"""

import logging
import math
import warnings
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Callable, Dict, Optional, Sequence, Tuple

import numpy as np
from scipy import integrate

from utils.errors import PreconditionError
from utils.rng import stream

log = logging.getLogger(__name__)

QUAD_EPSABS = 1e-10
QUAD_EPSREL = 1e-10
QUAD_LIMIT = 10_000
TRUNCATION_MASS = 1e-12
MC_MOMENT_SAMPLES = 1_000_000

SUPPORT_KINDS = ("compact-interval", "half-line", "full-space", "box", "ball")


@dataclass(frozen=True)
class QuadResult:
    value: float
    abserr: float
    converged: bool = True


def quad(
    func: Callable[[float], float],
    lo: float,
    hi: float,
    points: Sequence[float] = (),
    epsabs: float = QUAD_EPSABS,
    epsrel: float = QUAD_EPSREL,
    **kwargs,
) -> QuadResult:
    """Adaptive Gauss-Kronrod on [lo, hi] split at `points`; infinite ends allowed."""
    cuts = sorted({float(p) for p in points if lo < p < hi})
    if not cuts and np.isinf(lo) and np.isinf(hi):
        cuts = [0.0]
    edges = [lo, *cuts, hi]

    total = 0.0
    error = 0.0
    converged = True
    for a, b in zip(edges[:-1], edges[1:]):
        if a >= b:
            continue
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", integrate.IntegrationWarning)
            value, abserr = integrate.quad(
                func, a, b, epsabs=epsabs, epsrel=epsrel, limit=QUAD_LIMIT, **kwargs
            )
        if caught:
            converged = False
            log.debug("quadrature on [%g, %g]: %s", a, b, caught[0].message)
        total += value
        error += abserr
    return QuadResult(total, error, converged)


@dataclass(frozen=True)
class SupportDescriptor:
    kind: str
    bounds: Tuple[float, ...] = ()

    def __post_init__(self):
        if self.kind not in SUPPORT_KINDS:
            raise PreconditionError(f"unknown support kind '{self.kind}'")
        b = self.bounds
        if self.kind == "compact-interval" and not (len(b) == 2 and b[0] < b[1]):
            raise PreconditionError(f"compact interval needs a < b, got {b}")
        if self.kind == "half-line" and len(b) != 1:
            raise PreconditionError("half-line needs its left end R_0")
        if self.kind == "box":
            half = len(b) // 2
            if len(b) % 2 or any(lo >= hi for lo, hi in zip(b[:half], b[half:])):
                raise PreconditionError(f"box needs lows < highs, got {b}")
        if self.kind == "ball" and not (len(b) == 1 and b[0] > 0):
            raise PreconditionError("ball needs a positive radius")

    @property
    def bounded(self) -> bool:
        return self.kind in ("compact-interval", "box", "ball")

    def interval(self) -> Tuple[float, float]:
        """1-D hull of the support."""
        if self.kind == "compact-interval":
            return self.bounds[0], self.bounds[1]
        if self.kind == "half-line":
            return self.bounds[0], math.inf
        if self.kind == "full-space":
            return -math.inf, math.inf
        if self.kind == "box" and len(self.bounds) == 2:
            return self.bounds[0], self.bounds[1]
        raise PreconditionError(f"{self.kind} support is not an interval")

    def lebesgue_measure(self, dim: int) -> float:
        if self.kind == "compact-interval":
            return self.bounds[1] - self.bounds[0]
        if self.kind == "box":
            half = len(self.bounds) // 2
            return float(np.prod(np.subtract(self.bounds[half:], self.bounds[:half])))
        if self.kind == "ball":
            return math.pi ** (dim / 2) / math.gamma(dim / 2 + 1) * self.bounds[0] ** dim
        return math.inf


@dataclass(frozen=True)
class Window:
    """Quadrature window of a 1-D density and the probability it leaves out."""

    lo: float
    hi: float
    lost_mass: float


@dataclass(frozen=True)
class GrowthControl:
    eps: float
    eta: float
    M: float
    C: float

    def __post_init__(self):
        if self.eps < 0 or not 0 < self.eta < 0.5 or self.M <= 0 or self.C <= 0:
            raise PreconditionError(f"invalid growth control {self}")


@dataclass(frozen=True)
class TailCriterion:
    """Tail metadata feeding the maximal-function criteria.

    `log_profile` is log h for the radial profile h, `radial_norm` maps points
    to ‖x‖₀ and `radius` is N, beyond which f(x) = h(‖x‖₀).
    """

    log_profile: Optional[Callable[[np.ndarray], np.ndarray]] = None
    radial_norm: Optional[Callable[[np.ndarray], np.ndarray]] = None
    norm_id: str = "abs"
    radius: float = 0.0
    peak_constant: Optional[float] = None
    growth_control: Optional[GrowthControl] = None

    def radial_profile(self, t) -> np.ndarray:
        with np.errstate(under="ignore"):
            return np.exp(self.log_profile(np.asarray(t, dtype=float)))


class Density(ABC):
    family = ""
    symmetric = False
    log_concave = False
    lipschitz_compact = False
    piecewise_constant = False
    # f(x) ~ |x|^{-(1+tail_index)} at infinity; None for lighter tails
    tail_index: Optional[float] = None

    def __init__(
        self,
        params: Dict[str, float],
        dim: int,
        support: SupportDescriptor,
        tail: Optional[TailCriterion] = None,
    ):
        if dim < 1:
            raise PreconditionError("dimension must be positive")
        self.params = dict(params)
        self.dim = dim
        self.support = support
        self.tail = tail

    @property
    def id(self) -> str:
        args = ",".join(f"{k}={_fmt(v)}" for k, v in self.params.items())
        return f"{self.family}({args})"

    def __repr__(self) -> str:
        return f"<Density {self.id}>"

    @property
    def moment_order_limit(self) -> float:
        """Supremum of the p with a finite p-th moment."""
        return math.inf if self.tail_index is None else self.tail_index

    # evaluation -----------------------------------------------------------

    @abstractmethod
    def logpdf(self, x: np.ndarray) -> np.ndarray:
        """Log density; -inf outside the support."""

    def pdf(self, x: np.ndarray) -> np.ndarray:
        with np.errstate(under="ignore"):
            return np.exp(self.logpdf(x))

    def cdf(self, x: np.ndarray) -> np.ndarray:
        if self.dim != 1:
            raise PreconditionError(f"cdf is only available in dimension 1, not {self.dim}")
        return self._cdf(np.asarray(x, dtype=float))

    def _cdf(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError(f"{self.family} has no cdf")

    def ppf(self, u: np.ndarray) -> np.ndarray:
        if self.dim != 1:
            raise PreconditionError("quantiles are only available in dimension 1")
        return self._ppf(np.asarray(u, dtype=float))

    def _ppf(self, u: np.ndarray) -> np.ndarray:
        raise NotImplementedError(f"{self.family} has no quantile function")

    def breakpoints(self) -> Tuple[float, ...]:
        """Points where the 1-D pdf is not smooth."""
        return ()

    # sampling -------------------------------------------------------------

    def sample(self, seed: int, count: int) -> np.ndarray:
        """I.i.d. draws, shape (count,) in 1-D and (count, d) otherwise."""
        if count < 1:
            raise PreconditionError("count must be at least 1")
        return self.draw(stream(seed, "sample"), count)

    def draw(self, rng: np.random.Generator, count: int) -> np.ndarray:
        """Draw from an explicit generator; 1-D default is inverse cdf."""
        return self.ppf(rng.random(count))

    # integrals ------------------------------------------------------------

    def window(self, mass: float = TRUNCATION_MASS) -> Window:
        lo, hi = self.support.interval()
        lost = 0.0
        if np.isinf(lo):
            lo, lost = float(self.ppf(mass)), lost + mass
        if np.isinf(hi):
            hi, lost = float(self.ppf(1.0 - mass)), lost + mass
        return Window(lo, hi, lost)

    def integrate(self, func: Callable[[float], float], **kwargs) -> QuadResult:
        """∫ func dλ over the 1-D support, split at the breakpoints."""
        lo, hi = self.support.interval()
        return quad(func, lo, hi, points=self.breakpoints(), **kwargs)

    def moment(self, p: float) -> float:
        if p <= 0:
            raise PreconditionError("moment order must be positive")
        if p >= self.moment_order_limit:
            return math.inf
        closed = self._moment_closed(p)
        if closed is not None:
            return closed
        if self.dim == 1:
            res = self.integrate(lambda x: abs(x) ** p * float(self.pdf(x)))
            if not res.converged:
                log.warning("moment(%s, %g): quadrature did not converge, partial value %.6g ± %.2g",
                            self.id, p, res.value, res.abserr)
            return res.value
        return self._moment_mc(p)

    def _moment_closed(self, p: float) -> Optional[float]:
        return None

    def _moment_mc(self, p: float) -> float:
        from utils.norms import norm

        values = norm(self.sample(0, MC_MOMENT_SAMPLES)) ** p
        mean = float(values.mean())
        half_width = 1.96 * float(values.std(ddof=1)) / math.sqrt(values.size)
        log.info("moment(%s, %g) by MC: %.6g ± %.2g (95%%)", self.id, p, mean, half_width)
        return mean

    def power_integral(self, theta: float) -> float:
        """∫_{f>0} f^θ dλ_d, +inf when the integral diverges."""
        if theta > 1:
            raise PreconditionError(f"power integral needs θ <= 1, got {theta}")
        if theta <= 0 and not self.support.bounded:
            return math.inf
        if self.tail_index is not None and theta * (1 + self.tail_index) <= 1:
            return math.inf
        closed = self._power_integral_closed(theta)
        if closed is not None:
            return closed
        if self.dim != 1:
            raise NotImplementedError(f"{self.family}: no power integral in dimension {self.dim}")
        res = self.integrate(lambda x: math.exp(theta * float(self.logpdf(x))))
        if not res.converged:
            log.warning("power_integral(%s, %g): quadrature diagnostic, partial value %.6g",
                        self.id, theta, res.value)
        return res.value

    def _power_integral_closed(self, theta: float) -> Optional[float]:
        return None

    def mass(self, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
        """P([lo_k, hi_k]) for 1-D intervals."""
        lo = np.atleast_1d(np.asarray(lo, dtype=float))
        hi = np.atleast_1d(np.asarray(hi, dtype=float))
        return self.cdf(hi) - self.cdf(lo)

    def partial_moments(self, lo: np.ndarray, hi: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Mass and first moment of P on each interval [lo_k, hi_k]."""
        lo = np.atleast_1d(np.asarray(lo, dtype=float))
        hi = np.atleast_1d(np.asarray(hi, dtype=float))
        mass = self.mass(lo, hi)
        first = np.array([
            quad(lambda x: x * float(self.pdf(x)), a, b, points=self.breakpoints()).value
            for a, b in zip(lo, hi)
        ])
        return mass, first


def _fmt(value) -> str:
    if isinstance(value, float) and value.is_integer():
        return str(int(value))
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, tuple)):
        return "[" + ",".join(_fmt(v) for v in value) + "]"
    return str(value)


def as_points(density: Density, x) -> np.ndarray:
    """Validate `x` against the density's dimension."""
    x = np.asarray(x, dtype=float)
    if density.dim == 1:
        if x.ndim >= 1 and x.shape[-1] == 1 and x.ndim > 1:
            x = x[..., 0]
        return x
    if x.ndim == 0 or x.shape[-1] != density.dim:
        raise PreconditionError(f"point of dimension {x.shape[-1] if x.ndim else 0} "
                                f"for a density on R^{density.dim}")
    return x


def pdf_eval(density: Density, x) -> np.ndarray:
    values = density.pdf(as_points(density, x))
    return float(values) if np.ndim(values) == 0 else values


def cdf_eval(density: Density, x) -> np.ndarray:
    values = density.cdf(x)
    return float(values) if np.ndim(values) == 0 else values


def moment(density: Density, p: float) -> float:
    return density.moment(p)


def power_integral(density: Density, theta: float) -> float:
    return density.power_integral(theta)


def sample(density: Density, seed: int, count: int) -> np.ndarray:
    return density.sample(seed, count)

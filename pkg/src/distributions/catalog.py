"""
Catalog of densities addressable by string id

`parse_density("pareto(b=3)")` builds a Density; ids follow the pattern
name(key=value,...) with defaults for omitted parameters.
"""

import ast
import math
import re
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np
from scipy import special, stats

from distributions.base import (
    Density,
    GrowthControl,
    SupportDescriptor,
    TailCriterion,
    quad,
)
from distributions.stable import SUPPORTED_RHO, StableTables
from utils.errors import PreconditionError, UnknownDensityError

FULL_LINE = SupportDescriptor("full-space")
POSITIVE = SupportDescriptor("half-line", (0.0,))


def _mass(cdf: Callable, sf: Callable, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """P([lo, hi]) without cancellation in the upper tail."""
    upper = lo > 0
    return np.where(upper, sf(lo) - sf(hi), cdf(hi) - cdf(lo))


class ScipyDensity(Density):
    """1-D family backed by a frozen scipy.stats distribution."""

    def __init__(self, params, rv, support: SupportDescriptor, tail: Optional[TailCriterion] = None):
        super().__init__(params, 1, support, tail)
        self._rv = rv

    def logpdf(self, x):
        return self._rv.logpdf(x)

    def _cdf(self, x):
        return self._rv.cdf(x)

    def _ppf(self, u):
        return self._rv.ppf(u)

    def mass(self, lo, hi):
        return _mass(self._rv.cdf, self._rv.sf, lo, hi)


def _half_line_tail(density: ScipyDensity, mode: float) -> TailCriterion:
    return TailCriterion(
        log_profile=density._rv.logpdf,
        radial_norm=lambda x: np.asarray(x, dtype=float),
        norm_id="identity",
        radius=max(mode, 0.0),
        peak_constant=0.5,
    )


def _symmetric_tail(logpdf: Callable, radius: float = 0.0) -> TailCriterion:
    return TailCriterion(
        log_profile=logpdf,
        radial_norm=lambda x: np.abs(np.asarray(x, dtype=float)),
        norm_id="abs",
        radius=radius,
    )


# normal ---------------------------------------------------------------------


class Normal(Density):
    family = "normal"
    symmetric = True
    log_concave = True

    def __init__(self, d: int = 1, sigma: float = 1.0, cov: Optional[List[List[float]]] = None):
        if sigma <= 0:
            raise PreconditionError("normal needs sigma > 0")
        d = int(d)
        params: Dict[str, Any] = {"d": d, "sigma": float(sigma)}
        if cov is not None:
            params = {"d": d, "cov": cov}
            cov = np.asarray(cov, dtype=float)
            if cov.shape != (d, d):
                raise PreconditionError(f"cov must be {d}x{d}")
        else:
            cov = float(sigma) ** 2 * np.eye(d)
        self.cov = cov
        self.isotropic = np.allclose(cov, cov[0, 0] * np.eye(d))
        self.chol = np.linalg.cholesky(cov)
        self.log_det = 2.0 * float(np.sum(np.log(np.diag(self.chol))))
        self.sigma = math.sqrt(cov[0, 0])
        self._norm_const = -0.5 * (d * math.log(2 * math.pi) + self.log_det)
        super().__init__(params, d, FULL_LINE, TailCriterion(
            log_profile=lambda t: self._norm_const - 0.5 * np.asarray(t) ** 2,
            radial_norm=self.mahalanobis,
            norm_id="mahalanobis",
        ))

    def mahalanobis(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.dim == 1:
            return np.abs(x) / self.sigma
        z = np.linalg.solve(self.chol, np.moveaxis(x, -1, 0).reshape(self.dim, -1))
        return np.sqrt(np.sum(z * z, axis=0)).reshape(x.shape[:-1])

    def logpdf(self, x):
        return self._norm_const - 0.5 * self.mahalanobis(x) ** 2

    def _cdf(self, x):
        return special.ndtr(x / self.sigma)

    def _ppf(self, u):
        return self.sigma * special.ndtri(u)

    def draw(self, rng, count):
        if self.dim == 1:
            return self._ppf(rng.random(count))
        return rng.standard_normal((count, self.dim)) @ self.chol.T

    def _moment_closed(self, p):
        if self.dim == 1:
            return self.sigma ** p * 2 ** (p / 2) * math.gamma((p + 1) / 2) / math.sqrt(math.pi)
        from utils.norms import current_norm

        if self.isotropic and current_norm() == "euclidean":
            return self.sigma ** p * 2 ** (p / 2) * math.exp(
                math.lgamma((self.dim + p) / 2) - math.lgamma(self.dim / 2))
        return None

    def _power_integral_closed(self, theta):
        d = self.dim
        return theta ** (-d / 2) * math.exp((1 - theta) / 2 * (d * math.log(2 * math.pi) + self.log_det))

    def mass(self, lo, hi):
        lo = np.atleast_1d(np.asarray(lo, dtype=float)) / self.sigma
        hi = np.atleast_1d(np.asarray(hi, dtype=float)) / self.sigma
        return _mass(special.ndtr, lambda z: special.ndtr(-z), lo, hi)

    def partial_moments(self, lo, hi):
        s = self.sigma
        lo = np.atleast_1d(np.asarray(lo, dtype=float))
        hi = np.atleast_1d(np.asarray(hi, dtype=float))
        phi = lambda z: np.exp(-0.5 * z * z) / math.sqrt(2 * math.pi)
        return self.mass(lo, hi), s * (phi(lo / s) - phi(hi / s))


# uniform and ramp -----------------------------------------------------------


class Uniform(Density):
    family = "uniform"
    symmetric = False
    log_concave = True
    lipschitz_compact = True
    piecewise_constant = True

    def __init__(self, a: float = 0.0, b: float = 1.0, d: int = 1):
        if not a < b:
            raise PreconditionError("uniform needs a < b")
        d = int(d)
        self.a, self.b = float(a), float(b)
        support = (SupportDescriptor("compact-interval", (self.a, self.b)) if d == 1
                   else SupportDescriptor("box", (self.a,) * d + (self.b,) * d))
        super().__init__({"a": self.a, "b": self.b, "d": d}, d, support)
        self.level = (self.b - self.a) ** (-d)

    @property
    def lipschitz_constant(self) -> float:
        return 0.0

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        inside = (x >= self.a) & (x <= self.b)
        if self.dim > 1:
            inside = np.all(inside, axis=-1)
        return np.where(inside, math.log(self.level), -np.inf)

    def _cdf(self, x):
        return np.clip((x - self.a) / (self.b - self.a), 0.0, 1.0)

    def _ppf(self, u):
        return self.a + (self.b - self.a) * u

    def draw(self, rng, count):
        if self.dim == 1:
            return self._ppf(rng.random(count))
        return self.a + (self.b - self.a) * rng.random((count, self.dim))

    def _moment_closed(self, p):
        if self.dim == 1 and self.a >= 0:
            return (self.b ** (p + 1) - self.a ** (p + 1)) / ((p + 1) * (self.b - self.a))
        return None

    def _power_integral_closed(self, theta):
        return self.level ** (theta - 1)

    def partial_moments(self, lo, hi):
        lo = np.clip(np.atleast_1d(np.asarray(lo, dtype=float)), self.a, self.b)
        hi = np.clip(np.atleast_1d(np.asarray(hi, dtype=float)), self.a, self.b)
        return self.level * (hi - lo), self.level * (hi * hi - lo * lo) / 2

    def cell_sides(self, centers, lo, hi, p: float) -> Tuple[np.ndarray, np.ndarray]:
        """Closed-form ∫_lo^c (c - x)^p f and ∫_c^hi (x - c)^p f for each cell."""
        lo = np.clip(lo, self.a, self.b)
        hi = np.clip(hi, self.a, self.b)
        left = np.clip(centers - lo, 0.0, None) ** (p + 1)
        right = np.clip(hi - centers, 0.0, None) ** (p + 1)
        return self.level * left / (p + 1), self.level * right / (p + 1)


class Ramp(Density):
    """f(x) = (1 + c·x)/(1 + c/2) on [0, 1]; Lipschitz and bounded below."""

    family = "ramp"
    log_concave = True
    lipschitz_compact = True

    def __init__(self, c: float = 1.0):
        if c <= -1:
            raise PreconditionError("ramp needs c > -1 to stay bounded away from 0")
        self.c = float(c)
        self.k = 1 + self.c / 2
        super().__init__({"c": self.c}, 1, SupportDescriptor("compact-interval", (0.0, 1.0)))

    @property
    def lipschitz_constant(self) -> float:
        return abs(self.c) / self.k

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        inside = (x >= 0) & (x <= 1)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(inside, np.log(np.where(inside, 1 + self.c * x, 1.0) / self.k), -np.inf)

    def _cdf(self, x):
        x = np.clip(x, 0.0, 1.0)
        return (x + self.c * x * x / 2) / self.k

    def _ppf(self, u):
        if self.c == 0:
            return u
        return (np.sqrt(1 + 2 * self.c * self.k * u) - 1) / self.c

    def _moment_closed(self, p):
        return (1 / (p + 1) + self.c / (p + 2)) / self.k

    def _power_integral_closed(self, theta):
        if self.c == 0:
            return 1.0
        if theta == -1:
            return self.k * math.log1p(self.c) / self.c
        return self.k ** (-theta) * ((1 + self.c) ** (theta + 1) - 1) / (self.c * (theta + 1))

    def partial_moments(self, lo, hi):
        lo = np.clip(np.atleast_1d(np.asarray(lo, dtype=float)), 0.0, 1.0)
        hi = np.clip(np.atleast_1d(np.asarray(hi, dtype=float)), 0.0, 1.0)
        first = lambda x: (x * x / 2 + self.c * x ** 3 / 3) / self.k
        return self._cdf(hi) - self._cdf(lo), first(hi) - first(lo)


# radial families ------------------------------------------------------------


class HyperExponential(Density):
    """f(x) = κ ‖x‖^c exp(-a ‖x‖^b), Euclidean norm."""

    family = "hyperexp"
    symmetric = True

    def __init__(self, a: float = 1.0, b: float = 1.0, c: float = 0.0, d: int = 1):
        d = int(d)
        if a <= 0 or b <= 0 or c <= -d:
            raise PreconditionError("hyperexp needs a > 0, b > 0, c > -d")
        self.a, self.b, self.c = float(a), float(b), float(c)
        self.shape = (self.c + d) / self.b
        self.log_kappa = (math.log(self.b) + self.shape * math.log(self.a) + math.lgamma(d / 2)
                          - math.log(2) - (d / 2) * math.log(math.pi) - math.lgamma(self.shape))
        self.log_concave = self.c == 0 and self.b >= 1
        mode = (self.c / (self.a * self.b)) ** (1 / self.b) if self.c > 0 else 0.0
        super().__init__({"a": self.a, "b": self.b, "c": self.c, "d": d}, d, FULL_LINE,
                         TailCriterion(log_profile=self._log_profile,
                                       radial_norm=self._radius,
                                       norm_id="euclidean", radius=mode))

    def _radius(self, x):
        x = np.asarray(x, dtype=float)
        return np.abs(x) if self.dim == 1 else np.sqrt(np.sum(x * x, axis=-1))

    def _log_profile(self, t):
        t = np.asarray(t, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            log_t = np.log(t)
            term = np.where(t > 0, self.c * log_t, 0.0 if self.c == 0 else (np.inf if self.c < 0 else -np.inf))
        return self.log_kappa + term - self.a * t ** self.b

    def logpdf(self, x):
        return self._log_profile(self._radius(x))

    def _radial_cdf(self, t):
        return special.gammainc(self.shape, self.a * np.asarray(t) ** self.b)

    def _cdf(self, x):
        return 0.5 + 0.5 * np.sign(x) * self._radial_cdf(np.abs(x))

    def _ppf(self, u):
        v = np.abs(2 * u - 1)
        radius = (special.gammaincinv(self.shape, v) / self.a) ** (1 / self.b)
        return np.sign(u - 0.5) * radius

    def breakpoints(self):
        return (0.0,)

    def draw(self, rng, count):
        radius = (rng.gamma(self.shape, 1.0, count) / self.a) ** (1 / self.b)
        if self.dim == 1:
            return np.where(rng.random(count) < 0.5, -radius, radius)
        direction = rng.standard_normal((count, self.dim))
        direction /= np.linalg.norm(direction, axis=1, keepdims=True)
        return direction * radius[:, None]

    def _moment_closed(self, p):
        from utils.norms import current_norm

        if self.dim > 1 and current_norm() != "euclidean":
            return None
        return math.exp(math.lgamma(self.shape + p / self.b) - math.lgamma(self.shape)
                        - (p / self.b) * math.log(self.a))

    def _power_integral_closed(self, theta):
        d = self.dim
        k = (self.c * theta + d) / self.b
        if k <= 0:
            return math.inf
        log_sphere = math.log(2) + (d / 2) * math.log(math.pi) - math.lgamma(d / 2)
        return math.exp(theta * self.log_kappa + log_sphere + math.lgamma(k)
                        - math.log(self.b) - k * math.log(self.a * theta))


class Gamma(ScipyDensity):
    """f(x) = a^b/Γ(b) x^{b-1} e^{-ax} on (0, ∞)."""

    family = "gamma"

    def __init__(self, a: float = 1.0, b: float = 1.0):
        if a <= 0 or b <= 0:
            raise PreconditionError("gamma needs a > 0, b > 0")
        self.a, self.b = float(a), float(b)
        self.log_concave = self.b >= 1
        super().__init__({"a": self.a, "b": self.b}, stats.gamma(self.b, scale=1 / self.a), POSITIVE)
        self.tail = _half_line_tail(self, (self.b - 1) / self.a)

    def _moment_closed(self, p):
        return math.exp(math.lgamma(self.b + p) - math.lgamma(self.b) - p * math.log(self.a))

    def _power_integral_closed(self, theta):
        k = theta * (self.b - 1) + 1
        if k <= 0:
            return math.inf
        return math.exp(theta * (self.b * math.log(self.a) - math.lgamma(self.b))
                        + math.lgamma(k) - k * math.log(self.a * theta))

    def partial_moments(self, lo, hi):
        lo = np.atleast_1d(np.asarray(lo, dtype=float))
        hi = np.atleast_1d(np.asarray(hi, dtype=float))
        upper = stats.gamma(self.b + 1, scale=1 / self.a)
        first = (self.b / self.a) * _mass(upper.cdf, upper.sf, lo, hi)
        return self.mass(lo, hi), first


class DoubleGamma(ScipyDensity):
    """f(x) = a^c/(2Γ(c)) |x|^{c-1} e^{-a|x|}."""

    family = "dgamma"
    symmetric = True

    def __init__(self, a: float = 1.0, c: float = 1.0):
        if a <= 0 or c <= 0:
            raise PreconditionError("dgamma needs a > 0, c > 0")
        self.a, self.c = float(a), float(c)
        self.log_concave = self.c == 1
        super().__init__({"a": self.a, "c": self.c}, stats.dgamma(self.c, scale=1 / self.a), FULL_LINE)
        self.tail = _symmetric_tail(self._rv.logpdf, max(0.0, (self.c - 1) / self.a))

    def breakpoints(self):
        return (0.0,)

    def _moment_closed(self, p):
        return math.exp(math.lgamma(self.c + p) - math.lgamma(self.c) - p * math.log(self.a))

    def _power_integral_closed(self, theta):
        k = theta * (self.c - 1) + 1
        if k <= 0:
            return math.inf
        return 2 * math.exp(theta * (self.c * math.log(self.a) - math.log(2) - math.lgamma(self.c))
                            + math.lgamma(k) - k * math.log(self.a * theta))


class Weibull(ScipyDensity):
    """f(x) = b x^{b-1} exp(-x^b) on (0, ∞)."""

    family = "weibull"

    def __init__(self, b: float = 2.0):
        if b <= 0:
            raise PreconditionError("weibull needs b > 0")
        self.b = float(b)
        self.log_concave = self.b >= 1
        super().__init__({"b": self.b}, stats.weibull_min(self.b), POSITIVE)
        mode = ((self.b - 1) / self.b) ** (1 / self.b) if self.b > 1 else 0.0
        self.tail = _half_line_tail(self, mode)

    def _moment_closed(self, p):
        return math.gamma(1 + p / self.b)

    def _power_integral_closed(self, theta):
        k = (theta * (self.b - 1) + 1) / self.b
        if k <= 0:
            return math.inf
        return math.exp((theta - 1) * math.log(self.b) + math.lgamma(k) - k * math.log(theta))


class LogNormal(ScipyDensity):
    family = "lognormal"

    def __init__(self, a: float = 0.0, sigma: float = 1.0):
        if sigma <= 0:
            raise PreconditionError("lognormal needs sigma > 0")
        self.a, self.sigma = float(a), float(sigma)
        super().__init__({"a": self.a, "sigma": self.sigma},
                         stats.lognorm(self.sigma, scale=math.exp(self.a)), POSITIVE)
        self.tail = _half_line_tail(self, math.exp(self.a - self.sigma ** 2))

    def _moment_closed(self, p):
        return math.exp(self.a * p + 0.5 * (self.sigma * p) ** 2)

    def _power_integral_closed(self, theta):
        s2 = self.sigma ** 2
        return ((self.sigma * math.sqrt(2 * math.pi)) ** (1 - theta) / math.sqrt(theta)
                * math.exp(self.a * (1 - theta) + s2 * (1 - theta) ** 2 / (2 * theta)))


class Logistic(ScipyDensity):
    family = "logistic"
    symmetric = True
    log_concave = True

    def __init__(self):
        super().__init__({}, stats.logistic(), FULL_LINE)
        self.tail = _symmetric_tail(self._rv.logpdf)

    @property
    def id(self) -> str:
        return "logistic"

    def _power_integral_closed(self, theta):
        return math.exp(special.betaln(theta, theta))


class Pareto(ScipyDensity):
    """f(x) = b x^{-(b+1)} on [1, ∞)."""

    family = "pareto"

    def __init__(self, b: float = 3.0):
        if b <= 0:
            raise PreconditionError("pareto needs b > 0")
        self.b = float(b)
        self.tail_index = self.b
        super().__init__({"b": self.b}, stats.pareto(self.b), SupportDescriptor("half-line", (1.0,)))
        self.tail = TailCriterion(
            log_profile=lambda t: math.log(self.b) - (self.b + 1) * np.log(np.asarray(t, dtype=float)),
            radial_norm=lambda x: np.asarray(x, dtype=float),
            norm_id="identity",
            radius=1.0,
            peak_constant=0.5,
        )

    def _moment_closed(self, p):
        return self.b / (self.b - p)

    def _power_integral_closed(self, theta):
        return self.b ** theta / (theta * (self.b + 1) - 1)

    def partial_moments(self, lo, hi):
        lo = np.maximum(np.atleast_1d(np.asarray(lo, dtype=float)), 1.0)
        hi = np.maximum(np.atleast_1d(np.asarray(hi, dtype=float)), 1.0)
        if self.b == 1:
            first = np.log(hi / lo)
        else:
            first = self.b / (1 - self.b) * (hi ** (1 - self.b) - lo ** (1 - self.b))
        return self.mass(lo, hi), first


class Stable(Density):
    """Symmetric ρ-stable law, characteristic function exp(-|t|^ρ)."""

    family = "stable"
    symmetric = True

    def __init__(self, rho: float = 1.5):
        rho = float(rho)
        if rho not in SUPPORTED_RHO:
            raise PreconditionError(f"stable only supports rho in {SUPPORTED_RHO}")
        self.rho = rho
        self.tail_index = rho
        self._tables = StableTables(rho)
        super().__init__({"rho": rho}, 1, FULL_LINE, _symmetric_tail(self._tables.logpdf))

    def logpdf(self, x):
        return self._tables.logpdf(x)

    def _cdf(self, x):
        return self._tables.cdf(x)

    def _ppf(self, u):
        return self._tables.ppf(u)

    def draw(self, rng, count):
        return self._tables.draw(rng, count)

    def _moment_closed(self, p):
        return (2 ** p * math.gamma((1 + p) / 2) * math.gamma(1 - p / self.rho)
                / (math.gamma(1 - p / 2) * math.sqrt(math.pi)))


# poisson comb ---------------------------------------------------------------


class PoissonComb(Density):
    """X = N + Y_N with N ~ Poisson(λ) and Y on [0, 1) of density g.

    f(x) = e^{-λ} λ^{[x]}/[x]! · g(x - [x]); not monotone, so its tails are
    described by growth control rather than a radial profile.
    """

    family = "poissoncomb"

    def __init__(self, lam: float = 2.0, g: str = "uniform"):
        if lam <= 0:
            raise PreconditionError("poissoncomb needs lambda > 0")
        if g not in ("uniform", "ramp"):
            raise PreconditionError("poissoncomb g must be 'uniform' or 'ramp'")
        self.lam, self.g = float(lam), g
        self._poisson = stats.poisson(self.lam)
        self.top = int(self._poisson.isf(1e-17)) + 2
        eta = 0.04
        super().__init__({"lambda": self.lam, "g": g}, 1, POSITIVE, TailCriterion(
            peak_constant=0.5,
            growth_control=GrowthControl(eps=0.1, eta=eta, M=(1 + eta) * math.ceil(self.lam) + 1, C=0.02),
        ))

    def _log_g(self, u):
        if self.g == "uniform":
            return np.zeros_like(u)
        return np.log((2 + 2 * u) / 3)

    def _g_cdf(self, u):
        return u if self.g == "uniform" else (2 * u + u * u) / 3

    def _g_ppf(self, v):
        return v if self.g == "uniform" else np.sqrt(1 + 3 * v) - 1

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        k = np.floor(np.where(x >= 0, x, 0.0))
        value = self._poisson.logpmf(k) + self._log_g(np.where(x >= 0, x - k, 0.0))
        return np.where(x >= 0, value, -np.inf)

    def _cdf(self, x):
        k = np.floor(np.maximum(x, 0.0))
        value = self._poisson.cdf(k - 1) + self._poisson.pmf(k) * self._g_cdf(np.maximum(x, 0.0) - k)
        return np.where(x >= 0, value, 0.0)

    def _ppf(self, u):
        k = np.maximum(self._poisson.ppf(u), 0.0)
        below = self._poisson.cdf(k - 1)
        pmf = self._poisson.pmf(k)
        with np.errstate(divide="ignore", invalid="ignore"):
            v = np.clip(np.where(pmf > 0, (u - below) / pmf, 0.0), 0.0, 1.0)
        return k + self._g_ppf(v)

    def draw(self, rng, count):
        return rng.poisson(self.lam, count) + self._g_ppf(rng.random(count))

    def breakpoints(self):
        return tuple(float(k) for k in range(1, self.top))

    def _moment_closed(self, p):
        pieces = [
            float(self._poisson.pmf(k)) * quad(lambda u: (k + u) ** p * math.exp(float(self._log_g(u))),
                                               0.0, 1.0).value
            for k in range(self.top)
        ]
        return math.fsum(pieces)

    def _power_integral_closed(self, theta):
        if self.g == "uniform":
            g_part = 1.0
        else:
            g_part = (2 / 3) ** theta * (2 ** (theta + 1) - 1) / (theta + 1)
        logs = self._poisson.logpmf(np.arange(self.top))
        return g_part * math.fsum(np.exp(theta * logs))


# registry -------------------------------------------------------------------

FAMILIES: Dict[str, Tuple[Callable[..., Density], Dict[str, Any]]] = {
    "normal": (Normal, {"d": 1, "sigma": 1.0}),
    "uniform": (Uniform, {"a": 0.0, "b": 1.0, "d": 1}),
    "ramp": (Ramp, {"c": 1.0}),
    "hyperexp": (HyperExponential, {"a": 1.0, "b": 1.0, "c": 0.0, "d": 1}),
    "gamma": (Gamma, {"a": 1.0, "b": 1.0}),
    "dgamma": (DoubleGamma, {"a": 1.0, "c": 1.0}),
    "weibull": (Weibull, {"b": 2.0}),
    "lognormal": (LogNormal, {"a": 0.0, "sigma": 1.0}),
    "logistic": (Logistic, {}),
    "pareto": (Pareto, {"b": 3.0}),
    "stable": (Stable, {"rho": 1.5}),
    "poissoncomb": (PoissonComb, {"lambda": 2.0, "g": "uniform"}),
}

ALIASES = {
    "uniform01": ("uniform", {"a": 0.0, "b": 1.0}),
    "gaussian": ("normal", {}),
    "cauchy": ("stable", {"rho": 1.0}),
    "poisson-comb": ("poissoncomb", {}),
    "double-gamma": ("dgamma", {}),
    "hyper-exponential": ("hyperexp", {}),
    "lognorm": ("lognormal", {}),
}

_ID_PATTERN = re.compile(r"^\s*([A-Za-z][\w\-]*)\s*(?:\((.*)\))?\s*$")


def _split_args(text: str) -> List[str]:
    parts, depth, current = [], 0, []
    for ch in text:
        if ch in "([":
            depth += 1
        elif ch in ")]":
            depth -= 1
        if ch == "," and depth == 0:
            parts.append("".join(current))
            current = []
        else:
            current.append(ch)
    if "".join(current).strip():
        parts.append("".join(current))
    return parts


def _literal(text: str) -> Any:
    try:
        return ast.literal_eval(text)
    except (ValueError, SyntaxError):
        return text


def catalog_listing() -> List[str]:
    """Every family with its default parameters, plus the aliases."""
    listing = []
    for name, (_, defaults) in FAMILIES.items():
        args = ",".join(f"{k}={v}" for k, v in defaults.items())
        listing.append(f"{name}({args})" if args else name)
    listing.extend(sorted(ALIASES))
    return listing


def parse_density(text: str) -> Density:
    """Build a density from an id such as `normal(d=1,sigma=1)`."""
    match = _ID_PATTERN.match(text or "")
    if not match:
        raise UnknownDensityError(str(text), catalog_listing())
    name = match.group(1).lower()
    params: Dict[str, Any] = {}
    if name in ALIASES:
        name, preset = ALIASES[name]
        params.update(preset)
    if name not in FAMILIES:
        raise UnknownDensityError(name, catalog_listing())

    factory, defaults = FAMILIES[name]
    for part in _split_args(match.group(2) or ""):
        if "=" not in part:
            raise PreconditionError(f"density argument '{part.strip()}' must be key=value")
        key, value = (p.strip() for p in part.split("=", 1))
        if key not in defaults:
            raise PreconditionError(f"{name} has no parameter '{key}'; expected {sorted(defaults)}")
        params[key] = _literal(value)
    if "lambda" in params:
        params["lam"] = params.pop("lambda")
    return factory(**params)

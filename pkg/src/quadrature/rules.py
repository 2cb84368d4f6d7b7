"""
Quantization-based quadrature on R^d

E f(X) is approximated by Σ_i w_i f(α_i) where w_i = P(X ∈ C_i(α)). For a
stationary quadratic quantizer the first-order error term vanishes and the
remaining error is controlled by the Hessian of f and by L^{2q} distortions
of the quadratic quantizer (the mismatch problem).
"""

import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional, Tuple, Union

import numpy as np

from distributions.base import Density
from mismatch.criteria import CriterionReport, criterion_check
from quantizer.scalar import Codebook1D, _edges, cell_sides, distortion1d, stationarity_residual
from quantizer.vector import CodebookND, mc_distortion, stationarity_report
from utils.errors import PreconditionError, QuadratureError
from utils.norms import norm

log = logging.getLogger(__name__)

ORDERS = ("first", "second-stationary")
STATIONARY_RESIDUAL_1D = 1e-8
GAP_SIGMAS = 3.0
GAP_FLOOR = 1e-3
WEIGHT_TOL_1D = 1e-12
WEIGHT_TOL_ND = 1e-9

Quantizer = Union[Codebook1D, CodebookND]
# ‖D²f(x)‖ as a callable, or (A, κ) for A·(‖x‖^κ + 1)
HessianGrowth = Union[Callable[[np.ndarray], np.ndarray], Tuple[float, float]]


@dataclass
class QuadratureRule:
    codebook: Quantizer
    weights: np.ndarray
    density_id: str
    order: str = "first"

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        if self.order not in ORDERS:
            raise PreconditionError(f"unknown rule order '{self.order}', expected one of {ORDERS}")
        if self.weights.shape != (self.codebook.n,):
            raise PreconditionError("one weight per codepoint is required")
        tol = WEIGHT_TOL_1D if isinstance(self.codebook, Codebook1D) else WEIGHT_TOL_ND
        if abs(math.fsum(self.weights) - 1.0) > tol:
            raise PreconditionError(f"rule weights sum to {math.fsum(self.weights)!r}")

    @property
    def points(self) -> np.ndarray:
        return self.codebook.points

    @property
    def dim(self) -> int:
        return 1 if isinstance(self.codebook, Codebook1D) else self.codebook.dim

    @property
    def r(self) -> float:
        return self.codebook.r

    @classmethod
    def from_codebook(cls, codebook: Quantizer, density: Optional[Density] = None,
                      m: int = 200_000, seed: int = 0) -> "QuadratureRule":
        """Wrap a codebook; quadratic codebooks that pass the stationarity check get second order."""
        order = "first"
        if codebook.r == 2:
            if isinstance(codebook, Codebook1D):
                residual = codebook.residual
                if density is not None:
                    residual = float(np.max(np.abs(stationarity_residual(codebook, density, 2.0))))
                if residual <= STATIONARY_RESIDUAL_1D:
                    order = "second-stationary"
            elif density is not None:
                gap = stationarity_report(codebook, density, m, seed)
                if math.isfinite(gap.gap) and gap.gap <= GAP_SIGMAS * gap.stderr + GAP_FLOOR:
                    order = "second-stationary"
        log.debug("quadrature rule %s n=%d: %s", codebook.density_id, codebook.n, order)
        return cls(codebook, codebook.weights, codebook.density_id, order)


def _values(rule: QuadratureRule, f: Callable) -> np.ndarray:
    values = np.asarray(f(rule.points), dtype=float).reshape(-1)
    if values.size != rule.codebook.n:
        raise PreconditionError(f"integrand returned {values.size} values for {rule.codebook.n} codepoints")
    bad = np.flatnonzero(np.isnan(values))
    if bad.size:
        raise QuadratureError("integrand returned NaN", int(bad[0]))
    return values


def expect(rule: QuadratureRule, f: Callable) -> float:
    """Σ_i w_i f(α_i); f takes the array of codepoints."""
    return math.fsum(rule.weights * _values(rule, f))


def order2_bound(lip_grad: float, e_n2_sq: float) -> float:
    """[Df]_Lip·e_{n,2}² for a stationary quadratic rule."""
    if lip_grad < 0 or e_n2_sq < 0:
        raise PreconditionError("order2_bound needs nonnegative inputs")
    return lip_grad * e_n2_sq


def _distortion(rule: QuadratureRule, density: Density, s: float, m: int, seed: int) -> float:
    if isinstance(rule.codebook, Codebook1D):
        return distortion1d(rule.codebook, density, s)
    return mc_distortion(rule.codebook, density, s, m=m, seed=seed).estimate


def _hessian_norms(rule: QuadratureRule, hessian: HessianGrowth) -> np.ndarray:
    if callable(hessian):
        values = np.asarray(hessian(rule.points), dtype=float).reshape(-1)
    else:
        scale, kappa = hessian
        radius = np.abs(rule.points) if rule.dim == 1 else norm(rule.points)
        values = scale * (radius ** kappa + 1.0)
    if values.size != rule.codebook.n or np.any(values < 0) or np.any(np.isnan(values)):
        raise PreconditionError("Hessian norms must be one nonnegative number per codepoint")
    return values


@dataclass
class HolderSplitBound:
    bound: float
    p: float
    q: float
    hessian_norm: float
    distortion: float
    criterion: Optional[CriterionReport] = None


def holder_split_bound(hessian_growth: HessianGrowth, density: Density, rule: QuadratureRule, eta: float,
                       m: int = 200_000, seed: int = 0) -> HolderSplitBound:
    """½·‖D²f(X̂)‖_p·‖X − X̂‖²_{2q} with p = (d+2)/(d−η), q = (d+2)/(2+η).

    The L^p norm of the Hessian is an exact sum over the rule's atoms; η = d
    gives p = ∞ (sup over atoms) and q = 1.
    """
    d = rule.dim
    if rule.order != "second-stationary":
        raise PreconditionError("the Hölder split bound needs a stationary quadratic rule")
    if not 0 < eta <= d:
        raise PreconditionError(f"η must lie in (0, d] = (0, {d}]")
    if not math.isfinite(density.moment(d + 2)):
        raise PreconditionError(f"{density.id} has no finite moment of order d + 2 = {d + 2}")

    q = (d + 2) / (2 + eta)
    p = math.inf if eta == d else (d + 2) / (d - eta)
    norms = _hessian_norms(rule, hessian_growth)
    mask = rule.weights > 0
    if math.isinf(p):
        hessian_norm = float(norms[mask].max())
    else:
        hessian_norm = math.fsum(rule.weights * norms ** p) ** (1.0 / p)

    distortion = _distortion(rule, density, 2 * q, m, seed)
    if not math.isfinite(distortion):
        report = criterion_check(density, rule.r, 2 * q)
        log.warning("holder split bound: L^%g distortion diverges (%s)", 2 * q, report.kind)
        return HolderSplitBound(math.inf, p, q, hessian_norm, distortion, report)
    bound = 0.5 * hessian_norm * distortion ** (1.0 / q)
    return HolderSplitBound(bound, p, q, hessian_norm, distortion)


def holder_bound(hessian_holder: float, rho: float, rule: QuadratureRule, density: Density,
                 m: int = 200_000, seed: int = 0) -> float:
    """[D²f]_ρ·E‖X − X̂‖^{2+ρ}, the error of the Hessian-corrected rule."""
    if hessian_holder < 0:
        raise PreconditionError("Hölder constant must be nonnegative")
    if not 0 < rho <= 1:
        raise PreconditionError("ρ must lie in (0, 1]")
    return hessian_holder * _distortion(rule, density, 2 + rho, m, seed)


def second_order_expect(rule: QuadratureRule, f: Callable, f2: Callable, density: Density) -> float:
    """Σ w_i f(α_i) + ½ Σ f''(α_i) ∫_{C_i} (x − α_i)² dP in dimension 1."""
    if not isinstance(rule.codebook, Codebook1D):
        raise PreconditionError("the Hessian-corrected rule is computed in dimension 1")
    points = rule.codebook.points
    left, right = cell_sides(density, points, _edges(points, density), 2.0)
    curvature = np.asarray(f2(points), dtype=float).reshape(-1)
    bad = np.flatnonzero(np.isnan(curvature))
    if bad.size:
        raise QuadratureError("second derivative returned NaN", int(bad[0]))
    return expect(rule, f) + 0.5 * math.fsum(curvature * (left + right))

"""
Zador-type constants J_{r,d}, Q_r(P) and Q_{r,s}(P)
"""

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from distributions.base import Density
from distributions.catalog import Uniform
from utils.errors import PreconditionError
from utils.norms import current_norm

log = logging.getLogger(__name__)

MOMENT_BUMP = 0.01
# Quadratic hexagonal cell: 5/(18·√3)
HEXAGONAL_J22 = 5.0 / (18.0 * math.sqrt(3.0))
J_ESTIMATE_N = (64, 128, 256, 512, 1024)

FINITENESS_CLASSES = ("finite-by-moment", "infinite-s-ge-d-plus-r", "finite-numeric", "infinite-numeric")


@dataclass(frozen=True)
class JConstant:
    value: float
    provenance: str
    stderr: float = 0.0
    r: float = 0.0
    d: int = 1


@dataclass
class AsymptoticConstants:
    density_id: str
    d: int
    r: float
    s: float
    J_r: JConstant
    J_s: JConstant
    integral_r: float
    integral_rs: float
    Qr: float
    Qs: float
    Qrs: float
    finiteness: str
    intervals: Dict[str, Tuple[float, float]] = field(default_factory=dict)

    def as_dict(self) -> Dict[str, object]:
        return asdict(self)


def j_constant(r: float, d: int = 1, seed: int = 0, reference: bool = False,
               n_list: Sequence[int] = J_ESTIMATE_N, m: int = 200_000) -> JConstant:
    """J_{r,d}: exact in dimension 1, extrapolated from trained codebooks otherwise."""
    if r <= 0 or d < 1:
        raise PreconditionError("j_constant needs r > 0 and d >= 1")
    if d == 1:
        return JConstant(1.0 / (2.0 ** r * (r + 1.0)), "exact-1d", 0.0, r, d)
    if reference and d == 2 and r == 2 and current_norm() == "euclidean":
        return JConstant(HEXAGONAL_J22, "external-reference", 0.0, r, d)
    return _estimate_j(r, d, seed, n_list, m)


def _estimate_j(r: float, d: int, seed: int, n_list: Sequence[int], m: int) -> JConstant:
    """Fit n^{r/d} D_n = J + c·n^{-1/d} on the unit cube and keep the intercept."""
    from quantizer.vector import mc_distortion, train_nd

    cube = Uniform(d=d)
    scaled, errors = [], []
    for n in n_list:
        book = train_nd(cube, n, r, seed=seed)
        est = mc_distortion(book, cube, r, m=m, seed=seed)
        scaled.append(n ** (r / d) * est.estimate)
        errors.append(n ** (r / d) * est.stderr)
        log.info("J_{%g,%d}: n=%d scaled distortion %.6g ± %.2g", r, d, n, scaled[-1], errors[-1])

    x = np.asarray(n_list, dtype=float) ** (-1.0 / d)
    y = np.asarray(scaled)
    w = 1.0 / np.maximum(np.asarray(errors), 1e-15)
    design = np.column_stack([np.ones_like(x), x]) * w[:, None]
    coef, residuals, _, _ = np.linalg.lstsq(design, y * w, rcond=None)
    cov = np.linalg.inv(design.T @ design)
    dof = max(len(x) - 2, 1)
    chi2 = float(residuals[0]) / dof if residuals.size else 1.0
    stderr = math.sqrt(cov[0, 0] * max(chi2, 1.0))
    return JConstant(float(coef[0]), "estimated", stderr, r, d)


def _integrals(density: Density, r: float, s: float) -> Tuple[float, float]:
    d = density.dim
    return density.power_integral(d / (d + r)), density.power_integral(1.0 - s / (d + r))


def _check_moment(density: Density, r: float) -> None:
    if r >= density.moment_order_limit:
        raise PreconditionError(f"{density.id} has no finite moment of order {r}")


def q_rs(density: Density, r: float, s: float, j: Optional[JConstant] = None) -> float:
    """Q_{r,s}(P) = J_{s,d}·(∫f^{d/(d+r)})^{s/d}·∫_{f>0} f^{1-s/(d+r)}, or +inf."""
    if r <= 0 or s <= 0:
        raise PreconditionError("r and s must be positive")
    _check_moment(density, r)
    d = density.dim
    first, second = _integrals(density, r, s)
    if not (math.isfinite(first) and math.isfinite(second)):
        return math.inf
    j = j or j_constant(s, d)
    return j.value * first ** (s / d) * second


def q_r(density: Density, r: float, j: Optional[JConstant] = None) -> float:
    """Zador constant Q_r(P) = J_{r,d}·(∫f^{d/(d+r)})^{(d+r)/d}."""
    _check_moment(density, r)
    d = density.dim
    first = density.power_integral(d / (d + r))
    if not math.isfinite(first):
        return math.inf
    j = j or j_constant(r, d)
    return j.value * first ** ((d + r) / d)


def finiteness_class(density: Density, r: float, s: float) -> str:
    d = density.dim
    unbounded = math.isinf(density.support.lebesgue_measure(d))
    if s >= d + r and unbounded:
        return "infinite-s-ge-d-plus-r"
    if s < d + r:
        order = d * s / (d + r - s) + MOMENT_BUMP
        if math.isfinite(density.moment(order)):
            return "finite-by-moment"
    second = density.power_integral(1.0 - s / (d + r))
    return "finite-numeric" if math.isfinite(second) else "infinite-numeric"


def qrs_lower_bound_holds(density: Density, r: float, s: float, rtol: float = 1e-12) -> bool:
    """Q_{r,s}(P) >= Q_s(P), the Hölder inequality behind the mismatch bound."""
    d = density.dim
    j = j_constant(s, d, reference=True)
    return q_rs(density, r, s, j) >= q_r(density, s, j) * (1.0 - rtol)


def constants(density: Density, r: float, s: Optional[float] = None, seed: int = 0,
              reference: bool = False, j_n_list: Sequence[int] = J_ESTIMATE_N) -> AsymptoticConstants:
    """All constants of the (r, s) problem for one density, with provenance."""
    s = r if s is None else s
    _check_moment(density, r)
    d = density.dim
    j_r = j_constant(r, d, seed, reference, j_n_list)
    j_s = j_r if s == r else j_constant(s, d, seed, reference, j_n_list)
    first, second = _integrals(density, r, s)
    qr = j_r.value * first ** ((d + r) / d) if math.isfinite(first) else math.inf
    qs = q_r(density, s, j_s) if s < density.moment_order_limit else math.inf
    qrs = j_s.value * first ** (s / d) * second if math.isfinite(first) and math.isfinite(second) else math.inf

    result = AsymptoticConstants(density.id, d, r, s, j_r, j_s, first, second, qr, qs, qrs,
                                 finiteness_class(density, r, s))
    for name, value, j in (("Qr", qr, j_r), ("Qs", qs, j_s), ("Qrs", qrs, j_s)):
        if j.provenance == "estimated" and math.isfinite(value):
            spread = 2.0 * j.stderr / j.value
            result.intervals[name] = (value * (1.0 - spread), value * (1.0 + spread))
    return result

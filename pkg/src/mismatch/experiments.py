"""
Rate experiments for the (r, s) mismatch problem

Every experiment builds L^r-optimal (or trained) quantizers once per n and
then measures their L^s distortion. One-dimensional distortions are exact
cell integrals; higher dimensions use seeded Monte Carlo, so tables are
identical whatever the worker count.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from asymptotics.constants import AsymptoticConstants, j_constant
from asymptotics.point_density import point_density_cdf
from distributions.base import Density
from distributions.catalog import Uniform
from mismatch.criteria import criterion_check
from quantizer.scalar import Codebook1D, cell_spread, distortion1d, from_points, lloyd1d
from quantizer.vector import CodebookND, mc_distortion, train_nd
from utils.errors import PreconditionError

log = logging.getLogger(__name__)

TABLE_METHODS = ("auto", "exact-1d", "mc")
LOWER_BOUND_DELTA = 0.1
MC_NOISE_SIGMAS = 3.0
INCREMENT_TOL = 1e-14
SUPERCRITICAL_SLACK = 0.25

Quantizer = Union[Codebook1D, CodebookND]


@dataclass(frozen=True)
class RateRow:
    n: int
    distortion: float
    scaled: float
    stderr: float = 0.0


@dataclass
class RateTable:
    density_id: str
    r: float
    s: float
    d: int
    method: str
    rows: List[RateRow] = field(default_factory=list)
    unbounded: bool = True

    def __post_init__(self):
        ns = [row.n for row in self.rows]
        if any(b <= a for a, b in zip(ns[:-1], ns[1:])):
            raise PreconditionError("rate table rows need strictly increasing n")

    @property
    def n(self) -> np.ndarray:
        return np.array([row.n for row in self.rows], dtype=float)

    @property
    def scaled(self) -> np.ndarray:
        return np.array([row.scaled for row in self.rows])

    @property
    def distortions(self) -> np.ndarray:
        return np.array([row.distortion for row in self.rows])

    @property
    def monotone(self) -> bool:
        """Distortion strictly decreasing in n, up to MC noise for sampled rows."""
        for a, b in zip(self.rows[:-1], self.rows[1:]):
            slack = MC_NOISE_SIGMAS * math.hypot(a.stderr, b.stderr)
            if not b.distortion < a.distortion + slack:
                return False
        return True

    @property
    def supercritical(self) -> bool:
        return self.s >= self.d + self.r and self.unbounded


@dataclass
class LowerBoundReport:
    qrs: float
    top_n: Tuple[int, ...]
    scaled_min: float
    scaled_max: float
    ratio_min: float
    ratio_max: float
    ratio_last: float
    delta: float
    violated: bool


@dataclass
class SharpRateFit:
    limit: float
    slope: float
    qrs: float
    relative_error: float
    table: RateTable


@dataclass(frozen=True)
class CounterexampleRow:
    n: int
    distortion_r: float
    scaled_r: float
    upper_r: float
    distortion_s: float
    scaled_s: float
    lower_s: float


@dataclass
class CounterexampleReport:
    theta: float
    r: float
    s: float
    rows: List[CounterexampleRow]
    j_r: float
    j_s: float
    r_ratio: float
    target_exponent: float
    fitted_exponent: float
    raw_exponent: float
    lower_dominated: bool
    upper_respected: bool
    eventually_increasing: bool


@dataclass(frozen=True)
class IncrementRow:
    n: int
    error_n: float
    error_next: float
    increment: float
    c2: float


@dataclass
class IncrementReport:
    density_id: str
    r: float
    rows: List[IncrementRow]
    implied_c2: float
    stability: float
    all_positive: bool
    flagged: Tuple[int, ...] = ()


@dataclass
class CriticalRateReport:
    table: RateTable
    growth_slope: float


@dataclass
class SupercriticalReport:
    table: RateTable
    observed_exponent: float
    admitted_exponents: Optional[Tuple[float, float]]
    consistent: Optional[bool]
    criterion_kind: str


# helpers --------------------------------------------------------------------


def loglog_slope(x: Sequence[float], y: Sequence[float]) -> float:
    """Least-squares slope of log y against log x."""
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    if x.size < 2:
        raise PreconditionError("a slope needs at least two points")
    if np.any(x <= 0) or np.any(y <= 0) or not np.all(np.isfinite(y)):
        raise PreconditionError("log-log fit needs positive finite values")
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def _top_half(values: Sequence) -> list:
    values = list(values)
    return values[len(values) // 2:]


def _check_n_list(n_list: Sequence[int]) -> List[int]:
    ns = [int(n) for n in n_list]
    if not ns:
        raise PreconditionError("n_list is empty")
    if ns[0] < 1 or any(b <= a for a, b in zip(ns[:-1], ns[1:])):
        raise PreconditionError("n_list must be positive and strictly increasing")
    return ns


def _resolve_method(density: Density, r: float, method: str) -> str:
    if method not in TABLE_METHODS:
        raise PreconditionError(f"unknown method '{method}', expected one of {TABLE_METHODS}")
    exact_possible = density.dim == 1 and r >= 1
    if method == "exact-1d" and not exact_possible:
        raise PreconditionError("exact distortions need a 1-D density and r >= 1")
    if method == "auto":
        return "exact-1d" if exact_possible else "mc"
    return method


def _build(density: Density, n: int, r: float, seed: int, cache) -> Quantizer:
    if density.dim == 1 and r >= 1:
        if cache is not None:
            hit = cache.get(density.id, r, n)
            if hit is not None:
                return hit
        book = lloyd1d(density, n, r, seed=seed)
        if cache is not None and book.converged:
            cache.put(book)
        return book
    return train_nd(density, n, r, seed=seed)


def _quantizers(density: Density, r: float, n_list: Sequence[int], seed: int,
                workers: int = 1, cache=None) -> Dict[int, Quantizer]:
    """One quantizer per n; each cell is seeded on its own."""
    if workers <= 1 or len(n_list) == 1:
        return {n: _build(density, n, r, seed, cache) for n in n_list}
    with ThreadPoolExecutor(max_workers=workers) as pool:
        books = list(pool.map(lambda n: _build(density, n, r, seed, cache), n_list))
    return dict(zip(n_list, books))


# rate tables ----------------------------------------------------------------


def rate_tables(density: Density, r: float, s_list: Sequence[float], n_list: Sequence[int],
                method: str = "auto", seed: int = 0, workers: int = 1, m: int = 200_000,
                cache=None) -> List[RateTable]:
    """Rate tables for several s sharing one quantizer per n."""
    ns = _check_n_list(n_list)
    if any(s <= 0 for s in s_list):
        raise PreconditionError("s must be positive")
    method = _resolve_method(density, r, method)
    books = _quantizers(density, r, ns, seed, workers, cache)
    d = density.dim
    unbounded = not density.support.bounded

    tables = []
    for s in s_list:
        rows = []
        for n in ns:
            if method == "exact-1d":
                value, err = distortion1d(books[n], density, s), 0.0
            else:
                est = mc_distortion(books[n], density, s, m=m, seed=seed, workers=workers)
                value, err = est.estimate, est.stderr
            factor = n ** (s / d)
            rows.append(RateRow(n, value, factor * value, factor * err))
        table = RateTable(density.id, r, s, d, method, rows, unbounded)
        log.info("rate table %s r=%g s=%g: scaled %s", density.id, r, s,
                 ", ".join(f"{row.scaled:.6g}" for row in rows))
        tables.append(table)
    return tables


def rate_table(density: Density, r: float, s: float, n_list: Sequence[int], method: str = "auto",
               seed: int = 0, workers: int = 1, m: int = 200_000, cache=None) -> RateTable:
    """n^{s/d}·∫ d(x, α_n)^s dP for the L^r quantizers α_n."""
    return rate_tables(density, r, [s], n_list, method, seed, workers, m, cache)[0]


def lower_bound_check(table: RateTable, constants: Union[AsymptoticConstants, float],
                      delta: float = LOWER_BOUND_DELTA) -> LowerBoundReport:
    """Compare the largest quartile of the scaled column with Q_{r,s}."""
    qrs = constants.Qrs if isinstance(constants, AsymptoticConstants) else float(constants)
    if not math.isfinite(qrs) or qrs <= 0:
        raise PreconditionError("lower bound check needs a finite positive Q_{r,s}")
    if not table.rows:
        raise PreconditionError("empty rate table")
    count = max(1, math.ceil(len(table.rows) / 4))
    top = table.rows[-count:]
    scaled = np.array([row.scaled for row in top])
    last = top[-1].scaled / qrs
    violated = last < 1.0 - delta
    if violated:
        log.warning("%s r=%g s=%g: scaled distortion %.6g below (1-%g)·Q_rs at n=%d",
                    table.density_id, table.r, table.s, top[-1].scaled, delta, top[-1].n)
    return LowerBoundReport(qrs, tuple(row.n for row in top), float(scaled.min()), float(scaled.max()),
                            float(scaled.min() / qrs), float(scaled.max() / qrs), float(last), delta,
                            bool(violated))


def sharp_rate_fit(density: Density, r: float, s: float, n_list: Sequence[int],
                   workers: int = 1) -> SharpRateFit:
    """Fit the scaled column to c0 + c1/n on a compact Lipschitz density."""
    from asymptotics.constants import q_rs

    if not density.lipschitz_compact:
        raise PreconditionError(f"{density.id} is not flagged Lipschitz and bounded below on a compact interval")
    table = rate_table(density, r, s, n_list, "exact-1d", workers=workers)
    design = np.column_stack([np.ones(len(table.rows)), 1.0 / table.n])
    (limit, slope), *_ = np.linalg.lstsq(design, table.scaled, rcond=None)
    qrs = q_rs(density, r, s)
    return SharpRateFit(float(limit), float(slope), qrs, abs(limit - qrs) / qrs, table)


# Counter-example: a bad L^s quantizer with the optimal L^r rate ------------


def counterexample_codebook(n: int, theta: float, r: float = 2.0) -> Codebook1D:
    """{1/(2n^θ)} together with n-1 midpoints of a uniform grid on [n^{-θ}, 1]."""
    if n < 2:
        raise PreconditionError("the counter-example needs n >= 2")
    if theta <= 0:
        raise PreconditionError("θ must be positive")
    head = n ** (-theta)
    k = np.arange(2, n + 1)
    rest = head + (1.0 - head) * (2 * (k - 1) - 1) / (2 * (n - 1))
    points = np.concatenate([[head / 2], rest])
    return from_points(points, Uniform(), r, meta={"construction": "counterexample", "theta": theta})


def counterexample_rates(theta: float, r: float, s: float, n_list: Sequence[int]) -> CounterexampleReport:
    """Exact L^r and L^s errors of the counter-example codebooks on U([0, 1])."""
    lo, hi = r / (r + 1), s / (s + 1)
    if not lo < theta < hi:
        raise PreconditionError(f"θ={theta} must lie in (r/(r+1), s/(s+1)) = ({lo:.6g}, {hi:.6g})")
    ns = _check_n_list(n_list)
    if ns[0] < 2:
        raise PreconditionError("the counter-example needs n >= 2")
    uniform = Uniform()
    j_r, j_s = j_constant(r).value, j_constant(s).value

    rows = []
    for n in ns:
        book = counterexample_codebook(n, theta, r)
        dr, ds = distortion1d(book, uniform, r), distortion1d(book, uniform, s)
        upper = j_r * (n ** (r - theta * (r + 1)) + (1 - n ** (-theta)) ** (r + 1) * (n / (n - 1)) ** r)
        lower = n ** (s - theta * (s + 1)) / (2 ** (s + 1) * (s + 1))
        rows.append(CounterexampleRow(n, dr, n ** r * dr, upper, ds, n ** s * ds, lower))

    top = _top_half(rows)
    top_n = [row.n for row in top]
    excess = [row.scaled_s - j_s for row in top]
    fitted = loglog_slope(top_n, excess) if all(e > 0 for e in excess) else math.nan
    raw = loglog_slope(top_n, [row.scaled_s for row in top])
    increasing = all(b.scaled_s > a.scaled_s for a, b in zip(top[:-1], top[1:]))
    report = CounterexampleReport(
        theta, r, s, rows, j_r, j_s, rows[-1].scaled_r / j_r, s - theta * (s + 1), fitted, raw,
        all(row.scaled_s >= row.lower_s for row in rows),
        all(row.scaled_r <= row.upper_r * (1 + 1e-12) for row in rows),
        increasing,
    )
    log.info("counter-example θ=%g: r-ratio %.6g, L^s growth exponent %.4g (target %.4g)",
             theta, report.r_ratio, fitted, report.target_exponent)
    return report


# empirical measure and increments -------------------------------------------


def empirical_measure_distance(codebook: Codebook1D, density: Density, r: Optional[float] = None) -> float:
    """Kolmogorov distance between the codebook's empirical cdf and the point density cdf."""
    if density.dim != 1:
        raise PreconditionError("empirical measure distance is computed in dimension 1")
    r = codebook.r if r is None else r
    cdf = point_density_cdf(density, r).cdf
    u = np.atleast_1d(np.asarray(cdf(codebook.points), dtype=float))
    n = codebook.n
    k = np.arange(1, n + 1)
    return float(max(np.max(np.abs(u - k / n)), np.max(np.abs(u - (k - 1) / n))))


def increment_gap(density: Density, r: float, n_list: Sequence[int], workers: int = 1,
                  tol: float = INCREMENT_TOL) -> IncrementReport:
    """e_{n,r}^r - e_{n+1,r}^r and the implied constant C2 = max increment·n^{(d+r)/d}."""
    if density.dim != 1:
        raise PreconditionError("increment_gap needs exact 1-D distortions")
    ns = _check_n_list(n_list)
    sizes = sorted(set(ns) | {n + 1 for n in ns})
    books = _quantizers(density, r, sizes, 0, workers)
    errors = {n: distortion1d(books[n], density, r) for n in sizes}

    d = density.dim
    rows = []
    for n in ns:
        increment = errors[n] - errors[n + 1]
        rows.append(IncrementRow(n, errors[n], errors[n + 1], increment, increment * n ** ((d + r) / d)))
    flagged = tuple(row.n for row in rows if row.increment <= tol)
    if flagged:
        log.warning("increment_gap %s: non-positive increments at n=%s, quantizers not optimal",
                    density.id, flagged)
    upper = [row.c2 for row in _top_half(rows)]
    positive = [c for c in upper if c > 0]
    stability = max(positive) / min(positive) if positive else math.inf
    return IncrementReport(density.id, r, rows, max(row.c2 for row in rows), float(stability),
                           not flagged, flagged)


# critical and super-critical exponents --------------------------------------


def critical_rate_experiment(density: Density, r: float, n_list: Sequence[int], seed: int = 0,
                             workers: int = 1) -> CriticalRateReport:
    """s = d + r: growth of n^{1+r/d}·∫ d(x, α_n)^s dP on the top half of n."""
    s = density.dim + r
    table = rate_table(density, r, s, n_list, seed=seed, workers=workers)
    top = _top_half(table.rows)
    slope = loglog_slope([row.n for row in top], [row.scaled for row in top])
    log.info("critical rate %s r=%g: scaled growth slope %.4g", density.id, r, slope)
    return CriticalRateReport(table, slope)


def supercritical_rate_experiment(density: Density, r: float, s: float, n_list: Sequence[int],
                                  seed: int = 0, workers: int = 1) -> SupercriticalReport:
    """Observed decay exponent of the L^s error against the exponents (s-ϑ)/d the criterion admits."""
    d = density.dim
    if s <= d + r:
        raise PreconditionError(f"s={s} is not above d + r = {d + r}")
    table = rate_table(density, r, s, n_list, seed=seed, workers=workers)
    top = _top_half(table.rows)
    observed = -loglog_slope([row.n for row in top], [row.distortion for row in top])
    report = criterion_check(density, r, s)
    consistent = None
    if report.rate_exponents is not None:
        consistent = observed >= report.rate_exponents[1] - SUPERCRITICAL_SLACK
    return SupercriticalReport(table, observed, report.rate_exponents, consistent, report.kind)


def cell_spread_profile(density: Density, r: float, n_list: Sequence[int],
                        workers: int = 1) -> List[Tuple[int, float]]:
    """max/min gap ratio of the Lloyd codebooks along n on a compact support."""
    if not density.support.bounded:
        raise PreconditionError("cell spread needs a compact support")
    ns = _check_n_list(n_list)
    books = _quantizers(density, r, ns, 0, workers)
    return [(n, cell_spread(books[n], density.support)) for n in ns]

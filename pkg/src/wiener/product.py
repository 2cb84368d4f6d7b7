"""
Product functional quantization of Brownian motion on [0, T]

W = Σ_k √λ_k ξ_k e_k with λ_k = T²/(π²(k-½)²) and e_k(t) = √(2/T) sin((k-½)πt/T).
A product quantizer quantizes ξ_1..ξ_m independently with L²-optimal Gaussian
codebooks of sizes N_1 ≥ … ≥ N_m, Π N_k ≤ N; its atoms are all index
combinations, weighted by products of Gaussian cell masses.
"""

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import integrate

from distributions.catalog import Normal
from quantizer.scalar import Codebook1D, distortion1d, lloyd1d
from quantizer.vector import _combine
from storage.database import CodebookCache
from utils.errors import PreconditionError, QuadratureError
from utils.rng import map_batches

log = logging.getLogger(__name__)

MAX_ATOMS = 10_000
DEFAULT_GRID = 1024
ORTHONORMALITY_TOL = 1e-6
ORTHONORMALITY_CHECKED = 8
PATH_BATCH = 4096
MAX_S = 3.0
NORM_RATIO_BAND = (1.0, 2.5)

_default_cache: Optional[CodebookCache] = None
_e2: Dict[int, float] = {}


# Karhunen-Loève basis --------------------------------------------------------


@dataclass
class KLBasis:
    T: float
    m: int
    eigenvalues: np.ndarray
    orthonormality_error: float = 0.0

    def frequencies(self) -> np.ndarray:
        return (np.arange(1, self.m + 1) - 0.5) * math.pi / self.T

    def functions(self, t: np.ndarray) -> np.ndarray:
        """e_k(t) for k = 1..m, shape (m, len(t))."""
        t = np.asarray(t, dtype=float)
        return math.sqrt(2.0 / self.T) * np.sin(np.outer(self.frequencies(), t))

    def integrals(self) -> np.ndarray:
        """∫_0^T e_k(t) dt."""
        return math.sqrt(2.0 / self.T) / self.frequencies()

    def partial_trace(self, k: Optional[int] = None) -> float:
        k = self.m if k is None else k
        return math.fsum(self.eigenvalues[:k])

    @property
    def trace(self) -> float:
        """Σ_k λ_k = ∫_0^T t dt."""
        return self.T ** 2 / 2.0


def eigenvalues(T: float, m: int) -> np.ndarray:
    k = np.arange(1, m + 1)
    return T ** 2 / (math.pi ** 2 * (k - 0.5) ** 2)


def kl_eigensystem(T: float = 1.0, m: int = 10, grid: int = DEFAULT_GRID) -> KLBasis:
    """Eigenvalues of the Brownian covariance s∧t on [0, T] and the orthonormality check."""
    if m < 1:
        raise PreconditionError("the K-L basis needs m >= 1")
    if T <= 0:
        raise PreconditionError("T must be positive")
    basis = KLBasis(T, m, eigenvalues(T, m))
    t = np.linspace(0.0, T, grid + 1)
    funcs = KLBasis(T, min(m, ORTHONORMALITY_CHECKED), basis.eigenvalues).functions(t)
    gram = integrate.simpson(funcs[:, None, :] * funcs[None, :, :], x=t, axis=-1)
    basis.orthonormality_error = float(np.max(np.abs(gram - np.eye(len(funcs)))))
    if basis.orthonormality_error > ORTHONORMALITY_TOL:
        log.warning("K-L basis on %d points: Gram matrix off by %.3g", grid, basis.orthonormality_error)
    return basis


# coordinate codebooks ---------------------------------------------------------


def _cache(cache: Optional[CodebookCache]) -> CodebookCache:
    global _default_cache
    if cache is not None:
        return cache
    if _default_cache is None:
        _default_cache = CodebookCache()
        _default_cache.initialize()
    return _default_cache


def gaussian_codebook(k: int, cache: Optional[CodebookCache] = None) -> Codebook1D:
    """L²-optimal k-quantizer of N(0, 1), memoised in the codebook cache."""
    normal = Normal()
    store = _cache(cache)
    book = store.get(normal.id, 2.0, k)
    if book is None:
        book = lloyd1d(normal, k, 2.0)
        store.put(book)
    return book


def coordinate_codebooks(K: int, cache: Optional[CodebookCache] = None) -> List[Codebook1D]:
    """Gaussian codebooks of sizes 1..K."""
    if K < 1:
        raise PreconditionError("K must be at least 1")
    return [gaussian_codebook(k, cache) for k in range(1, K + 1)]


def distortion_table(K: int, cache: Optional[CodebookCache] = None) -> np.ndarray:
    """e²_{k,2}(N(0, 1)) for k = 1..K."""
    normal = Normal()
    for k in range(1, K + 1):
        if k not in _e2:
            _e2[k] = 1.0 if k == 1 else distortion1d(gaussian_codebook(k, cache), normal, 2.0)
    return np.array([_e2[k] for k in range(1, K + 1)])


# allocation -------------------------------------------------------------------


def _search(lams: np.ndarray, trace: float, cost: Callable[[int], float], budget: int,
            max_first: int) -> Tuple[float, Tuple[int, ...]]:
    """Branch and bound over non-increasing N_1 ≥ N_2 ≥ … ≥ 2 with Π N_k ≤ budget.

    Ties go to fewer coordinates, then to the lexicographically smaller allocation.
    """
    best: List = [(trace, 0, ())]
    prefix_sums = np.concatenate([[0.0], np.cumsum(lams)])

    def visit(j: int, prefix: Tuple[int, ...], spent: float, left: int, cap: int):
        value = spent + trace - prefix_sums[j]
        candidate = (value, len(prefix), prefix)
        if candidate < best[0]:
            best[0] = candidate
        if left < 2 or j >= len(lams):
            return
        top = min(cap, left)
        depth = min(int(math.log2(left)), len(lams) - j)
        bound = value - (1.0 - cost(top)) * (prefix_sums[j + depth] - prefix_sums[j])
        if bound > best[0][0]:
            return
        for k in range(2, top + 1):
            visit(j + 1, prefix + (k,), spent + lams[j] * cost(k), left // k, k)

    visit(0, (), 0.0, budget, max_first)
    value, _, allocation = best[0]
    return value, allocation


def _coordinates(N: int) -> int:
    return max(1, int(math.log2(max(N, 2))) + 1)


def optimal_allocation(N: int, T: float = 1.0, cache: Optional[CodebookCache] = None) -> Tuple[int, ...]:
    """Allocation minimising Σ λ_k e²_{N_k,2} + Σ_{k>m} λ_k with Π N_k ≤ N."""
    if N < 1:
        raise PreconditionError("N must be at least 1")
    if N == 1:
        return (1,)
    lams = eigenvalues(T, _coordinates(N))
    trace = T ** 2 / 2.0
    K = min(N, math.isqrt(N) + 1)
    while True:
        table = distortion_table(K, cache)
        value, allocation = _search(lams, trace, lambda k: table[k - 1], N, K)
        if K >= N:
            break
        # any N_1 > K leaves at most N // (K + 1) for the other coordinates
        rest, _ = _search(lams[1:], trace - lams[0], lambda k: table[k - 1], N // (K + 1), K)
        if rest >= value:
            break
        K = min(N, 2 * K)
    log.debug("optimal allocation N=%d: %s (squared error %.10g)", N, allocation, value)
    return allocation or (1,)


def surrogate_allocation(N: int, T: float = 1.0) -> Tuple[int, ...]:
    """Allocation minimising the Zador surrogate Σ λ_k/N_k² + Σ_{k>m} λ_k."""
    if N < 1:
        raise PreconditionError("N must be at least 1")
    lams = eigenvalues(T, _coordinates(N))
    _, allocation = _search(lams, T ** 2 / 2.0, lambda k: 1.0 / k ** 2, N, N)
    return allocation or (1,)


def allocation_error(allocation: Sequence[int], T: float = 1.0,
                     cache: Optional[CodebookCache] = None) -> float:
    """‖W - Ŵ‖₂² of a product quantizer with the given allocation."""
    lams = eigenvalues(T, len(allocation))
    table = distortion_table(max(allocation), cache)
    quantized = math.fsum(lam * table[k - 1] for lam, k in zip(lams, allocation))
    return quantized + T ** 2 / 2.0 - math.fsum(lams)


# product quantizer ------------------------------------------------------------


@dataclass
class ProductQuantizer:
    basis: KLBasis
    allocation: Tuple[int, ...]
    codebooks: List[Codebook1D]
    meta: Dict[str, object] = field(default_factory=dict)

    def __post_init__(self):
        if len(self.codebooks) != len(self.allocation) or self.basis.m != len(self.allocation):
            raise PreconditionError("one codebook and one eigenvalue per allocated coordinate")
        if any(b.n != k for b, k in zip(self.codebooks, self.allocation)):
            raise PreconditionError("codebook sizes must match the allocation")
        self._coefficients = None
        self._weights = None

    @property
    def T(self) -> float:
        return self.basis.T

    @property
    def size(self) -> int:
        return int(np.prod(self.allocation))

    def _atoms(self):
        if self._coefficients is None:
            combos = np.array(list(itertools.product(*(range(k) for k in self.allocation))), dtype=int)
            self._coefficients = np.column_stack(
                [book.points[combos[:, j]] for j, book in enumerate(self.codebooks)])
            self._weights = np.prod(
                np.column_stack([book.weights[combos[:, j]] for j, book in enumerate(self.codebooks)]), axis=1)
        return self._coefficients, self._weights

    @property
    def coefficients(self) -> np.ndarray:
        """x^{(i_k)}_k per atom, shape (atoms, m)."""
        return self._atoms()[0]

    @property
    def weights(self) -> np.ndarray:
        return self._atoms()[1]

    def paths(self, t: np.ndarray) -> np.ndarray:
        """Atom paths Ŵ(t) = Σ_k √λ_k x_k e_k(t), shape (atoms, len(t))."""
        scaled = self.coefficients * np.sqrt(self.basis.eigenvalues)
        return scaled @ self.basis.functions(t)

    def coordinate_errors(self) -> np.ndarray:
        return distortion_table(max(self.allocation))[np.asarray(self.allocation) - 1]

    def sq_distortion(self) -> float:
        """‖W - Ŵ‖₂² = Σ_{k≤m} λ_k e²_{N_k,2} + Σ_{k>m} λ_k, computed exactly."""
        lams = self.basis.eigenvalues
        return math.fsum(lams * self.coordinate_errors()) + self.basis.trace - math.fsum(lams)

    def expected_sq_norm(self) -> float:
        """E ∫_0^T Ŵ(t)² dt by Parseval over the atoms."""
        return math.fsum(self.weights * (self.coefficients ** 2 @ self.basis.eigenvalues))


def build_product_quantizer(T: float = 1.0, N: int = 1, seed: int = 0,
                            cache: Optional[CodebookCache] = None) -> ProductQuantizer:
    """Optimal-allocation product quantizer of W on [0, T] with at most N atoms."""
    if N < 1:
        raise PreconditionError("N must be at least 1")
    if N > MAX_ATOMS:
        raise PreconditionError(f"N={N} exceeds the atom bound {MAX_ATOMS}")
    allocation = optimal_allocation(N, T, cache)
    basis = kl_eigensystem(T, len(allocation))
    codebooks = [gaussian_codebook(k, cache) for k in allocation]
    pq = ProductQuantizer(basis, allocation, codebooks, {"N": N, "seed": seed})
    log.info("product quantizer N=%d: allocation %s, ‖W-Ŵ‖₂² = %.10g", N, allocation, pq.sq_distortion())
    return pq


# functionals and quadrature ---------------------------------------------------


@dataclass(frozen=True)
class Functional:
    """A path functional; `on_coefficients` evaluates it exactly from K-L coefficients."""

    name: str
    on_paths: Callable[[np.ndarray, np.ndarray], np.ndarray]
    on_coefficients: Optional[Callable[[np.ndarray, KLBasis], np.ndarray]] = None


def _trapezoid(values: np.ndarray, t: np.ndarray) -> np.ndarray:
    return integrate.trapezoid(values, x=t, axis=-1)


def _mean_from_coefficients(coef: np.ndarray, basis: KLBasis) -> np.ndarray:
    return coef @ (np.sqrt(basis.eigenvalues) * basis.integrals())


path_mean = Functional("path_mean", _trapezoid, _mean_from_coefficients)
path_sq_norm = Functional("path_sq_norm", lambda w, t: _trapezoid(w ** 2, t),
                          lambda coef, basis: coef ** 2 @ basis.eigenvalues)
exp_path_mean = Functional("exp_path_mean", lambda w, t: np.exp(_trapezoid(w, t)),
                           lambda coef, basis: np.exp(_mean_from_coefficients(coef, basis)))

FUNCTIONALS = {f.name: f for f in (path_mean, path_sq_norm, exp_path_mean)}

PathFunctional = Union[Functional, Callable[[np.ndarray, np.ndarray], np.ndarray]]


def wiener_quadrature(pq: ProductQuantizer, F: PathFunctional, grid: int = DEFAULT_GRID) -> float:
    """Σ_atoms weight·F(Ŵ)."""
    if isinstance(F, Functional) and F.on_coefficients is not None:
        values = F.on_coefficients(pq.coefficients, pq.basis)
    else:
        evaluate = F.on_paths if isinstance(F, Functional) else F
        t = np.linspace(0.0, pq.T, grid + 1)
        values = evaluate(pq.paths(t), t)
    values = np.asarray(values, dtype=float).reshape(-1)
    bad = np.flatnonzero(np.isnan(values))
    if bad.size:
        raise QuadratureError("path functional returned NaN", int(bad[0]))
    return math.fsum(pq.weights * values)


@dataclass
class WienerBound:
    lipschitz: Optional[float]
    smooth: Optional[float]
    sq_distortion: float


def wiener_quadrature_bound(pq: ProductQuantizer, lip: Optional[float] = None,
                            hessian: Optional[float] = None) -> WienerBound:
    """[F]_Lip·‖W - Ŵ‖₂ and, for a stationary quantizer, ‖D²F‖_∞·‖W - Ŵ‖₂²."""
    sq = pq.sq_distortion()
    return WienerBound(None if lip is None else lip * math.sqrt(sq),
                       None if hessian is None else hessian * sq, sq)


# Monte Carlo L^s errors -------------------------------------------------------


@dataclass
class WienerMoments:
    s_values: Tuple[float, ...]
    moments: Tuple[float, ...]
    stderrs: Tuple[float, ...]
    paths: int
    grid: int
    grid_bias: float

    @property
    def norms(self) -> Tuple[float, ...]:
        """‖W - Ŵ‖_s = (E|W - Ŵ|^s)^{1/s}."""
        return tuple(m ** (1.0 / s) for s, m in zip(self.s_values, self.moments))

    def norm_ratio(self, s: float) -> float:
        """‖W - Ŵ‖_s / ‖W - Ŵ‖_2 on the same simulated paths."""
        if 2.0 not in self.s_values or s not in self.s_values:
            raise PreconditionError(f"norm_ratio needs s=2 and s={s:g} among {self.s_values}")
        norms = dict(zip(self.s_values, self.norms))
        return norms[s] / norms[2.0]

    def within_band(self) -> bool:
        """Every s > 2 keeps ‖W - Ŵ‖_s / ‖W - Ŵ‖_2 inside NORM_RATIO_BAND."""
        lo, hi = NORM_RATIO_BAND
        return all(lo <= self.norm_ratio(s) <= hi for s in self.s_values if s > 2.0)


def _brownian(rng: np.random.Generator, count: int, t: np.ndarray) -> np.ndarray:
    steps = rng.standard_normal((count, len(t) - 1)) * np.sqrt(np.diff(t))
    return np.concatenate([np.zeros((count, 1)), np.cumsum(steps, axis=1)], axis=1)


def _trapezoid_weights(t: np.ndarray) -> np.ndarray:
    h = np.diff(t)
    weights = np.zeros_like(t)
    weights[:-1] += h / 2
    weights[1:] += h / 2
    return weights


def _quantize_paths(pq: ProductQuantizer, w: np.ndarray, t: np.ndarray, funcs: np.ndarray) -> np.ndarray:
    """Nearest atom path: project on e_1..e_m, then nearest codepoint per coordinate."""
    lams = pq.basis.eigenvalues
    xi = (w * _trapezoid_weights(t)) @ funcs.T / np.sqrt(lams)
    chosen = np.empty_like(xi)
    for j, book in enumerate(pq.codebooks):
        idx = np.searchsorted(book.boundaries(), xi[:, j])
        chosen[:, j] = book.points[idx]
    return (chosen * np.sqrt(lams)) @ funcs


def wiener_error_moments(pq: ProductQuantizer, s_list: Sequence[float], paths: int = 100_000,
                         grid: int = DEFAULT_GRID, seed: int = 0, workers: int = 1) -> WienerMoments:
    """E|W - Ŵ|^s_{L²} for several s on the same simulated paths."""
    s_values = tuple(float(s) for s in s_list)
    if any(not 0 < s < MAX_S for s in s_values):
        raise PreconditionError(f"s must lie in (0, {MAX_S:g})")
    if grid < DEFAULT_GRID:
        raise PreconditionError(f"the time grid needs at least {DEFAULT_GRID} steps")
    if paths < 2:
        raise PreconditionError("at least two paths are needed")
    t = np.linspace(0.0, pq.T, grid + 1)
    funcs = pq.basis.functions(t)

    def work(rng, size):
        w = _brownian(rng, size, t)
        sq = _trapezoid((w - _quantize_paths(pq, w, t, funcs)) ** 2, t)
        parts = []
        for s in s_values:
            values = sq ** (s / 2.0)
            mean = float(values.mean())
            parts.append((size, mean, float(np.sum((values - mean) ** 2)), float(values.max())))
        return parts

    batches = map_batches(work, paths, seed, "wiener", workers, PATH_BATCH)
    moments, stderrs = [], []
    for i in range(len(s_values)):
        count, mean, m2, _ = _combine([batch[i] for batch in batches])
        moments.append(mean)
        stderrs.append(math.sqrt(m2 / (count - 1) / count))
    return WienerMoments(s_values, tuple(moments), tuple(stderrs), paths, grid, pq.T ** 2 / (2.0 * grid))


def wiener_distortion_mc(pq: ProductQuantizer, s: float, paths: int = 100_000, grid: int = DEFAULT_GRID,
                         seed: int = 0, workers: int = 1) -> Tuple[float, float]:
    """(estimate of E|W - Ŵ|^s_{L²}, standard error)."""
    result = wiener_error_moments(pq, [s], paths, grid, seed, workers)
    return result.moments[0], result.stderrs[0]

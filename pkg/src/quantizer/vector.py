"""
Quantizers in R^d trained by Monte Carlo

Two trainers: Lloyd on a fixed sample (k-means, r = 2 only) and competitive
learning vector quantization (CLVQ, any r > 0) with Ruppert-Polyak averaging.
Nearest-neighbour search goes through scipy's kd-tree with the configured norm.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
from scipy.spatial import cKDTree

from distributions.base import Density
from quantizer.scalar import Codebook1D
from utils.errors import CodebookError, PreconditionError
from utils.norms import current_norm, minkowski_p, norm
from utils.rng import map_batches, stream

log = logging.getLogger(__name__)

METHODS = ("auto", "lloyd-mc", "clvq")
BUDGET_PER_POINT = 1000
MAX_EPOCHS = 200
MIN_MC_SAMPLES = 10_000
MIN_CELL_SAMPLES = 30
TAIL_SHARE = 0.1
# ties are resolved among this many nearest codepoints
TIE_NEIGHBOURS = 4
TIE_RTOL = 1e-12


@dataclass
class CodebookND:
    points: np.ndarray
    r: float
    density_id: str
    weights: np.ndarray
    norm: str = "euclidean"
    train_meta: Dict[str, object] = field(default_factory=dict)
    _tree: Optional[cKDTree] = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=float))
        self.weights = np.asarray(self.weights, dtype=float)
        if self.points.shape[0] == 0:
            raise CodebookError("a codebook needs at least one point")
        if np.unique(self.points, axis=0).shape[0] != self.points.shape[0]:
            raise CodebookError("codebook points must be pairwise distinct")
        if self.weights.shape != (self.points.shape[0],):
            raise CodebookError("one weight per point is required")
        if np.any(self.weights < 0) or abs(math.fsum(self.weights) - 1.0) > 1e-9:
            raise CodebookError("weights must be nonnegative and sum to 1")

    @property
    def n(self) -> int:
        return int(self.points.shape[0])

    @property
    def dim(self) -> int:
        return int(self.points.shape[1])

    @property
    def tree(self) -> cKDTree:
        if self._tree is None:
            self._tree = cKDTree(self.points)
        return self._tree


@dataclass(frozen=True)
class MCEstimate:
    estimate: float
    stderr: float
    count: int
    tail_warning: bool = False


@dataclass(frozen=True)
class GapReport:
    gap: float
    stderr: float
    excluded: Tuple[int, ...] = ()


def to_nd(codebook: Codebook1D) -> CodebookND:
    """View a scalar codebook as a codebook on R^1."""
    return CodebookND(codebook.points[:, None], codebook.r, codebook.density_id,
                      codebook.weights, current_norm(), {"source": "exact-1d"})


def _as_nd(codebook: Union[Codebook1D, CodebookND]) -> CodebookND:
    return to_nd(codebook) if isinstance(codebook, Codebook1D) else codebook


def _rows(x: np.ndarray, dim: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return x.reshape(-1, dim)


def _assign(codebook: CodebookND, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Nearest codepoint of every row of x, ties to the lower index."""
    if codebook.n == 1:
        return np.zeros(len(x), dtype=int), norm(x - codebook.points[0], codebook.norm)
    dist, idx = codebook.tree.query(x, k=min(codebook.n, TIE_NEIGHBOURS), p=minkowski_p(codebook.norm))
    tied = dist <= dist[:, :1] * (1.0 + TIE_RTOL)
    first = np.where(tied, idx, codebook.n).min(axis=1)
    return first, dist[:, 0]


def nearest(codebook: Union[Codebook1D, CodebookND], x) -> Tuple:
    """(index, distance) of the closest codepoint; arrays for a batch of points."""
    book = _as_nd(codebook)
    x = np.asarray(x, dtype=float)
    single = x.ndim <= 1 and (x.size == book.dim)
    if x.shape[-1:] != (book.dim,) and not (book.dim == 1 and x.ndim <= 1):
        raise PreconditionError(f"query of shape {x.shape} for a codebook on R^{book.dim}")
    idx, dist = _assign(book, _rows(x, book.dim))
    if single:
        return int(idx[0]), float(dist[0])
    return idx, dist


# training -------------------------------------------------------------------


def _draw(density: Density, rng: np.random.Generator, count: int) -> np.ndarray:
    return _rows(density.draw(rng, count), density.dim)


def _empirical(codebook: CodebookND, x: np.ndarray, r: float) -> Tuple[np.ndarray, float, float]:
    idx, dist = _assign(codebook, x)
    counts = np.bincount(idx, minlength=codebook.n)
    values = dist ** r
    return counts / len(x), float(values.mean()), float(values.std(ddof=1) / math.sqrt(len(x)))


def _initial(density: Density, n: int, r: float, sample: np.ndarray) -> np.ndarray:
    if density.dim == 1:
        from quantizer.scalar import LloydSolver

        try:
            return LloydSolver(density, r if r >= 1 else 1.0).initial_points(n)[:, None]
        except PreconditionError:
            pass
    unique = np.unique(sample, axis=0)
    if len(unique) < n:
        raise PreconditionError(f"sample has only {len(unique)} distinct points for n={n}")
    return sample[:n].copy() if len(np.unique(sample[:n], axis=0)) == n else unique[:n].copy()


def _lloyd_mc(density: Density, n: int, sample: np.ndarray, seed: int, tol: float,
              max_epochs: int, norm_id: str) -> Tuple[np.ndarray, List[float]]:
    points = _initial(density, n, 2.0, sample)
    history: List[float] = []
    dim = sample.shape[1]
    for epoch in range(max_epochs):
        book = CodebookND(points, 2.0, density.id, np.full(n, 1.0 / n), norm_id)
        idx, dist = _assign(book, sample)
        history.append(float(np.mean(dist ** 2)))
        counts = np.bincount(idx, minlength=n)
        sums = np.stack([np.bincount(idx, weights=sample[:, j], minlength=n) for j in range(dim)], axis=1)
        new = points.copy()
        filled = counts > 0
        new[filled] = sums[filled] / counts[filled, None]
        empty = np.flatnonzero(~filled)
        if empty.size:
            rng = stream(seed, "reseed", epoch)
            new[empty] = sample[rng.integers(0, len(sample), empty.size)]
            log.info("lloyd-mc epoch %d: reseeded %d empty cells", epoch, empty.size)
        move = float(np.max(norm(new - points, norm_id)))
        points = new
        if move <= tol and not empty.size:
            break
    return points, history


def _clvq(density: Density, n: int, r: float, sample: np.ndarray, gamma0: float, c: float,
          norm_id: str) -> np.ndarray:
    points = _initial(density, n, r, sample)
    average = np.zeros_like(points)
    half = len(sample) // 2
    averaged = 0
    for t, x in enumerate(sample):
        diff = x - points
        dist = norm(diff, norm_id)
        k = int(np.argmin(dist))
        if dist[k] > 0:
            if norm_id == "euclidean":
                direction = diff[k] / dist[k]
            else:
                direction = np.sign(diff[k]) * (np.abs(diff[k]) == dist[k])
            gamma = gamma0 / (1.0 + t * gamma0 / c)
            points[k] += gamma * r * dist[k] ** (r - 1) * direction
        if t >= half:
            average += points
            averaged += 1
    return average / max(averaged, 1)


def train_nd(density: Density, n: int, r: float = 2.0, method: str = "auto", seed: int = 0,
             budget: Optional[int] = None, tol: float = 1e-10, max_epochs: int = MAX_EPOCHS,
             gamma0: Optional[float] = None, c: Optional[float] = None) -> CodebookND:
    """Approximately L^r-optimal n-quantizer of `density` from `budget` samples.

    CLVQ moves the winning codepoint by gamma_t·r·|x - a|^(r-1) along x - a with
    gamma_t = gamma0 / (1 + t·gamma0 / c). The default gamma0 = 0.5·scale^(2-r),
    scale being the sample spread, makes a first step of about 0.5·r·scale for
    any r; for r = 2 it is the plain 0.5 step.
    """
    if n < 1:
        raise PreconditionError("n must be at least 1")
    if r <= 0:
        raise PreconditionError("r must be positive")
    if method not in METHODS:
        raise PreconditionError(f"unknown method '{method}', expected one of {METHODS}")
    if r >= density.moment_order_limit:
        raise PreconditionError(f"{density.id} has no finite moment of order {r}")
    if method == "auto":
        method = "lloyd-mc" if r == 2 else "clvq"
    if method == "lloyd-mc" and r != 2:
        raise PreconditionError("lloyd-mc trains quadratic quantizers only; use clvq")
    budget = budget or BUDGET_PER_POINT * n
    if budget < BUDGET_PER_POINT * n:
        raise PreconditionError(f"budget {budget} is below {BUDGET_PER_POINT}·n = {BUDGET_PER_POINT * n}")

    norm_id = current_norm()
    d = density.dim
    sample = _draw(density, stream(seed, "train", density.id), budget)
    meta: Dict[str, object] = {"seed": seed, "samples": budget, "method": method}
    if method == "lloyd-mc":
        points, history = _lloyd_mc(density, n, sample, seed, tol, max_epochs, norm_id)
        meta.update(epochs=len(history), history=history)
    else:
        spread = float(np.sqrt(np.sum(np.var(sample[: min(budget, 100_000)], axis=0))))
        scale = spread if spread > 0 else 1.0
        gamma0 = gamma0 if gamma0 is not None else 0.5 * scale ** (2.0 - r)
        c = c if c is not None else n ** (2.0 / d) * budget / 10.0
        points = _clvq(density, n, r, sample, gamma0, c, norm_id)
        meta.update(gamma0=gamma0, c=c, averaging="ruppert-polyak, second half")
        sample = _draw(density, stream(seed, "weights", density.id), budget)

    points = _distinct(points)
    book = CodebookND(points, r, density.id, np.full(len(points), 1.0 / len(points)), norm_id)
    weights, distortion, stderr = _empirical(book, sample, r)
    meta.update(distortion=distortion, stderr=stderr)
    log.info("train_nd %s n=%d r=%g (%s): distortion %.6g ± %.2g", density.id, n, r, method, distortion, stderr)
    return CodebookND(points, r, density.id, weights, norm_id, meta)


def _distinct(points: np.ndarray) -> np.ndarray:
    _, first = np.unique(points, axis=0, return_index=True)
    if len(first) < len(points):
        log.warning("dropping %d coincident codepoints", len(points) - len(first))
    return points[np.sort(first)]


# evaluation -----------------------------------------------------------------


def _combine(parts: List[Tuple[int, float, float, float]]) -> Tuple[int, float, float, float]:
    """Merge (count, mean, M2, max) batch summaries in order."""
    count, mean, m2, peak = 0, 0.0, 0.0, 0.0
    for c, m, s2, top in parts:
        total = count + c
        delta = m - mean
        mean += delta * c / total
        m2 += s2 + delta * delta * count * c / total
        count = total
        peak = max(peak, top)
    return count, mean, m2, peak


def mc_distortion(codebook: Union[Codebook1D, CodebookND], density: Density, s: float,
                  m: int = 200_000, seed: int = 0, workers: int = 1) -> MCEstimate:
    """Monte Carlo estimate of E d(X, α)^s with its standard error."""
    if s <= 0:
        raise PreconditionError("s must be positive")
    if m < MIN_MC_SAMPLES:
        raise PreconditionError(f"mc_distortion needs at least {MIN_MC_SAMPLES} samples")
    book = _as_nd(codebook)
    if book.dim != density.dim:
        raise PreconditionError("codebook and density dimensions differ")

    def work(rng, size):
        _, dist = _assign(book, _draw(density, rng, size))
        values = dist ** s
        mean = float(values.mean())
        return size, mean, float(np.sum((values - mean) ** 2)), float(values.max())

    count, mean, m2, peak = _combine(map_batches(work, m, seed, "distortion", workers))
    stderr = math.sqrt(m2 / (count - 1) / count)
    tail = s >= density.moment_order_limit or peak > TAIL_SHARE * mean * count
    if tail:
        log.warning("mc_distortion(%s, s=%g): estimate dominated by the tail, it may diverge",
                    density.id, s)
    return MCEstimate(mean, stderr, count, tail)


def stationarity_report(codebook: Union[Codebook1D, CodebookND], density: Density,
                        m: int = 200_000, seed: int = 0, workers: int = 1) -> GapReport:
    """Distance between each codepoint and the MC mean of its cell."""
    book = _as_nd(codebook)
    if book.r != 2:
        raise PreconditionError("stationarity gap is defined for quadratic codebooks")
    n, d = book.n, book.dim

    def work(rng, size):
        x = _draw(density, rng, size)
        idx, _ = _assign(book, x)
        counts = np.bincount(idx, minlength=n)
        sums = np.stack([np.bincount(idx, weights=x[:, j], minlength=n) for j in range(d)], axis=1)
        squares = np.stack([np.bincount(idx, weights=x[:, j] ** 2, minlength=n) for j in range(d)], axis=1)
        return counts, sums, squares

    parts = map_batches(work, m, seed, "stationarity", workers)
    counts = sum(p[0] for p in parts)
    sums = sum(p[1] for p in parts)
    squares = sum(p[2] for p in parts)
    kept = counts >= MIN_CELL_SAMPLES
    excluded = tuple(int(k) for k in np.flatnonzero(~kept))
    if excluded:
        log.info("stationarity gap: %d cells with fewer than %d samples excluded", len(excluded), MIN_CELL_SAMPLES)
    if not np.any(kept):
        return GapReport(math.nan, math.nan, excluded)
    means = sums[kept] / counts[kept, None]
    variance = np.maximum(squares[kept] / counts[kept, None] - means ** 2, 0.0)
    stderr = np.sqrt(np.sum(variance, axis=1) / counts[kept])
    gaps = norm(means - book.points[kept], book.norm)
    return GapReport(float(gaps.max()), float(stderr[np.argmax(gaps)]), excluded)


def stationarity_gap(codebook: Union[Codebook1D, CodebookND], density: Density,
                     m: int = 200_000, seed: int = 0) -> float:
    return stationarity_report(codebook, density, m, seed).gap

"""
Tests for product functional quantization of Brownian motion
"""

import math
import sys
from pathlib import Path

import numpy as np
import pytest
from scipy import integrate

sys.path.insert(0, str(Path(__file__).parent.parent / "src"))

from mismatch.experiments import loglog_slope
from storage.database import CodebookCache
from utils.errors import PreconditionError, QuadratureError
from wiener.product import (FUNCTIONALS, MAX_ATOMS, NORM_RATIO_BAND, allocation_error, build_product_quantizer,
                            eigenvalues, kl_eigensystem, optimal_allocation, surrogate_allocation, wiener_distortion_mc,
                            wiener_error_moments, wiener_quadrature, wiener_quadrature_bound)


@pytest.fixture(scope="module")
def cache():
    store = CodebookCache()
    store.initialize()
    yield store
    store.close()


def test_first_eigenvalue():
    assert eigenvalues(1.0, 1)[0] == pytest.approx(4 / math.pi ** 2, rel=1e-15)


def test_partial_trace_approaches_half():
    lams = eigenvalues(1.0, 10_000)
    assert np.all(np.diff(lams) < 0)
    assert math.fsum(lams) == pytest.approx(0.5, abs=1e-4)


def test_eigenvalues_scale_with_horizon():
    assert eigenvalues(2.0, 3) == pytest.approx(4 * eigenvalues(1.0, 3))


def test_kl_basis_is_orthonormal():
    basis = kl_eigensystem(1.0, 8)
    assert basis.orthonormality_error < 1e-6
    assert basis.trace == pytest.approx(0.5)
    t = np.linspace(0, 1, 2049)
    assert basis.integrals() == pytest.approx(integrate.trapezoid(basis.functions(t), x=t, axis=-1), abs=1e-6)


def test_kl_eigenvalues_match_discretized_covariance():
    """Top eigenvalues of the s∧t kernel on a 512-point grid."""
    t = (np.arange(512) + 0.5) / 512
    kernel = np.minimum.outer(t, t) / 512
    top = np.sort(np.linalg.eigvalsh(kernel))[::-1][:3]
    assert top == pytest.approx(eigenvalues(1.0, 3), rel=1e-3)


def test_small_allocations(cache):
    assert optimal_allocation(1, cache=cache) == (1,)
    assert optimal_allocation(2, cache=cache) == (2,)


def _enumerate(budget, cap, prefix=()):
    yield prefix
    for k in range(2, min(cap, budget) + 1):
        yield from _enumerate(budget // k, k, prefix + (k,))


def test_optimal_allocation_matches_enumeration(cache):
    """Branch and bound agrees with brute force over all factor sequences for N=100."""
    candidates = [a for a in _enumerate(100, 100) if a]
    errors = {a: allocation_error(a, cache=cache) for a in candidates}
    best = min(errors.values())
    chosen = optimal_allocation(100, cache=cache)
    assert np.prod(chosen) <= 100
    assert allocation_error(chosen, cache=cache) == pytest.approx(best, rel=1e-12)
    assert allocation_error(chosen, cache=cache) <= allocation_error((10, 10), cache=cache)
    assert allocation_error(chosen, cache=cache) <= allocation_error(surrogate_allocation(100), cache=cache)


def test_single_atom_quantizer(cache):
    pq = build_product_quantizer(1.0, 1, cache=cache)
    assert pq.size == 1
    assert pq.weights == pytest.approx([1.0])
    assert np.max(np.abs(pq.paths(np.linspace(0, 1, 5)))) < 1e-12
    assert pq.sq_distortion() == pytest.approx(0.5, rel=1e-14)


def test_two_atom_quantizer(cache):
    pq = build_product_quantizer(1.0, 2, cache=cache)
    assert pq.allocation == (2,)
    assert pq.weights == pytest.approx([0.5, 0.5])
    assert pq.coefficients[:, 0] == pytest.approx([-math.sqrt(2 / math.pi), math.sqrt(2 / math.pi)], abs=1e-6)
    lam = 4 / math.pi ** 2
    assert pq.sq_distortion() == pytest.approx(0.5 - lam * 2 / math.pi, abs=1e-6)


def test_atom_bound():
    with pytest.raises(PreconditionError):
        build_product_quantizer(1.0, MAX_ATOMS + 1)


@pytest.mark.parametrize("N", [4, 16, 100])
def test_trace_identity(cache, N):
    """E ∫Ŵ² + ‖W - Ŵ‖₂² = T²/2 for a stationary product quantizer."""
    pq = build_product_quantizer(1.0, N, cache=cache)
    assert pq.expected_sq_norm() + pq.sq_distortion() == pytest.approx(0.5, abs=1e-9)
    assert wiener_quadrature(pq, FUNCTIONALS["path_sq_norm"]) == pytest.approx(0.5 - pq.sq_distortion(), abs=1e-9)


def test_path_mean_vanishes(cache):
    pq = build_product_quantizer(1.0, 64, cache=cache)
    assert wiener_quadrature(pq, FUNCTIONALS["path_mean"]) == pytest.approx(0.0, abs=1e-10)


def test_path_evaluation_matches_coefficient_form(cache):
    """Grid evaluation of ∫Ŵ² agrees with the Parseval form."""
    pq = build_product_quantizer(1.0, 12, cache=cache)
    on_paths = wiener_quadrature(pq, FUNCTIONALS["path_sq_norm"].on_paths, grid=4096)
    assert on_paths == pytest.approx(wiener_quadrature(pq, FUNCTIONALS["path_sq_norm"]), rel=1e-5)


def test_exp_mean_increases_to_lognormal_mean(cache):
    """E exp(∫W) = e^{1/6}, approached from below."""
    values = [wiener_quadrature(build_product_quantizer(1.0, N, cache=cache), FUNCTIONALS["exp_path_mean"])
              for N in (25, 100, 400)]
    target = math.exp(1 / 6)
    assert all(v < target for v in values)
    assert values[0] < values[1] < values[2]
    assert values[-1] == pytest.approx(target, rel=1e-2)


def test_nan_functional_reports_atom(cache):
    pq = build_product_quantizer(1.0, 2, cache=cache)
    with pytest.raises(QuadratureError) as exc:
        wiener_quadrature(pq, lambda w, t: np.full(len(w), np.nan))
    assert exc.value.index == 0


def test_quadrature_bound(cache):
    pq = build_product_quantizer(1.0, 16, cache=cache)
    bound = wiener_quadrature_bound(pq, lip=1.0, hessian=2.0)
    assert bound.lipschitz == pytest.approx(math.sqrt(pq.sq_distortion()))
    error = abs(wiener_quadrature(pq, FUNCTIONALS["path_sq_norm"]) - 0.5)
    assert error <= bound.smooth


def test_mc_moment_of_trivial_quantizer(cache):
    """Ŵ ≡ 0 gives E∫W² = T²/2."""
    pq = build_product_quantizer(1.0, 1, cache=cache)
    estimate, stderr = wiener_distortion_mc(pq, 2.0, paths=20_000, seed=1)
    assert abs(estimate - 0.5) <= 4 * stderr


def test_mc_moments_match_exact_distortion(cache):
    pq = build_product_quantizer(1.0, 16, cache=cache)
    moments = wiener_error_moments(pq, [1.0, 2.0], paths=20_000, seed=2, workers=2)
    assert abs(moments.moments[1] - pq.sq_distortion()) <= 4 * moments.stderrs[1] + moments.grid_bias
    # L^1 norm never exceeds the L^2 norm
    assert moments.norms[0] <= moments.norms[1]


def test_mc_moments_reject_bad_arguments(cache):
    pq = build_product_quantizer(1.0, 4, cache=cache)
    with pytest.raises(PreconditionError):
        wiener_error_moments(pq, [3.0], paths=100, seed=0)
    with pytest.raises(PreconditionError):
        wiener_error_moments(pq, [2.0], paths=100, grid=256, seed=0)


@pytest.mark.slow
def test_rate_in_log_log_band(cache):
    """‖W - Ŵ^N‖₂ decays like (log N)^{-1/2}."""
    ns = [4, 8, 16, 32, 64, 128, 256, 512, 1024]
    errors = [math.sqrt(build_product_quantizer(1.0, N, cache=cache).sq_distortion()) for N in ns]
    assert all(b <= a for a, b in zip(errors, errors[1:]))
    slope = loglog_slope(np.log(ns), errors)
    assert -0.65 <= slope <= -0.35


@pytest.mark.slow
@pytest.mark.parametrize("N", [10, 50, 100, 400])
def test_l25_error_stays_in_band(cache, N):
    """‖W - Ŵ‖_{2.5} / ‖W - Ŵ‖_2 lies in [1, 2.5]."""
    pq = build_product_quantizer(1.0, N, cache=cache)
    moments = wiener_error_moments(pq, [2.0, 2.5], paths=20_000, seed=5, workers=2)
    lo, hi = NORM_RATIO_BAND
    assert lo <= moments.norm_ratio(2.5) <= hi
    assert moments.within_band()


def test_norm_ratio_needs_quadratic_moment(cache):
    pq = build_product_quantizer(1.0, 4, cache=cache)
    moments = wiener_error_moments(pq, [1.0], paths=1_000, seed=0)
    with pytest.raises(PreconditionError):
        moments.norm_ratio(1.0)

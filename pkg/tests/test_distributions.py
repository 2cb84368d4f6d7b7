"""
Tests for the density catalog
"""

import math
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent.parent / "src"))

from distributions.base import cdf_eval, moment, pdf_eval
from distributions.catalog import ALIASES, FAMILIES, Normal, Uniform, catalog_listing, parse_density
from utils.errors import PreconditionError, UnknownDensityError
from utils.rng import batch_sizes, map_batches, stream


def test_normal_pdf_at_zero():
    """Standard normal density at the origin."""
    assert float(Normal().pdf(np.array([0.0]))[0]) == pytest.approx((2 * math.pi) ** -0.5, abs=1e-12)


def test_pareto_pdf():
    """b x^{-(b+1)} at x = 2 for b = 3."""
    pareto = parse_density("pareto(b=3)")
    assert float(pareto.pdf(np.array([2.0]))[0]) == pytest.approx(0.1875, rel=1e-12)


def test_gamma_cdf():
    """Exponential-type gamma cdf at 1."""
    gamma = parse_density("gamma(a=1,b=1)")
    assert float(gamma.cdf(np.array([1.0]))[0]) == pytest.approx(1 - math.exp(-1), abs=1e-12)


def test_normal_power_integral_closed_form():
    """∫φ^θ = θ^{-1/2}(2π)^{(1-θ)/2}."""
    value = Normal().power_integral(1 / 3)
    assert value == pytest.approx(math.sqrt(3) * (2 * math.pi) ** (1 / 3), rel=1e-10)
    assert value == pytest.approx(2.12284, abs=1e-5)


def test_heavy_tail_power_integral_diverges():
    """Pareto tails make ∫f^θ infinite once θ(1+b) <= 1."""
    pareto = parse_density("pareto(b=3)")
    assert math.isinf(pareto.power_integral(0.25))
    assert math.isfinite(pareto.power_integral(0.5))
    assert math.isinf(pareto.moment(3.0))


@pytest.mark.parametrize("density_id", ["normal", "uniform", "ramp", "gamma(a=1,b=2)", "weibull",
                                        "lognormal", "logistic", "pareto(b=3)", "dgamma", "hyperexp"])
def test_pdf_integrates_to_one(density_id):
    """Every 1-D catalog density is normalized."""
    density = parse_density(density_id)
    total = density.integrate(lambda x: float(density.pdf(np.array([x]))[0]))
    assert total.value == pytest.approx(1.0, abs=1e-8)


def test_sampling_is_seeded():
    """Same seed, same draws; the sample mean of N(0, 1) is near 0."""
    normal = Normal()
    first = normal.sample(1, 100_000)
    assert np.array_equal(first, normal.sample(1, 100_000))
    assert abs(first.mean()) < 0.02


def test_poisson_comb_mass_below_one():
    """P(X < 1) = P(N = 0) = e^{-λ}."""
    comb = parse_density("poissoncomb(lambda=2)")
    draws = comb.sample(3, 100_000)
    assert np.mean(draws < 1) == pytest.approx(math.exp(-2), abs=0.01)


def test_parse_density_ids_and_aliases():
    """Ids round-trip through the parser; aliases resolve to their family."""
    normal = parse_density("normal(d=1,sigma=1)")
    assert normal.id == Normal().id
    assert parse_density("gaussian").id == normal.id
    assert parse_density("uniform01").id == Uniform().id
    assert parse_density(normal.id).id == normal.id


def test_unknown_density_lists_catalog():
    """Unknown names carry the catalog for the CLI."""
    with pytest.raises(UnknownDensityError) as exc:
        parse_density("banana")
    assert exc.value.exit_code == 2
    assert exc.value.catalog == catalog_listing()


def test_unknown_parameter_rejected():
    with pytest.raises(PreconditionError):
        parse_density("normal(mu=3)")


def test_catalog_listing_covers_families():
    listing = catalog_listing()
    for name in FAMILIES:
        assert any(entry.startswith(name) for entry in listing)
    for alias in ALIASES:
        assert alias in listing


def test_streams_are_independent_of_batch_workers():
    """map_batches returns the same batches whatever the worker count."""
    work = lambda rng, size: rng.random(size).sum()
    serial = map_batches(work, 100_000, 7, "test", workers=1, batch=8192)
    threaded = map_batches(work, 100_000, 7, "test", workers=4, batch=8192)
    assert serial == threaded
    assert sum(batch_sizes(100_000, 8192)) == 100_000
    assert stream(7, "a").random() != stream(7, "b").random()


def test_evaluation_helpers():
    assert pdf_eval(Normal(), 0.0) == pytest.approx(1 / math.sqrt(2 * math.pi))
    assert cdf_eval(Normal(), 0.0) == pytest.approx(0.5)
    assert moment(Normal(), 2.0) == pytest.approx(1.0)
    assert pdf_eval(Normal(d=2), [0.0, 0.0]) == pytest.approx(1 / (2 * math.pi))
    with pytest.raises(PreconditionError):
        pdf_eval(Normal(d=2), [0.0, 0.0, 0.0])


@pytest.mark.parametrize("density_id, tol", [("stable(rho=1.5)", 1e-5), ("stable(rho=1)", 1e-6),
                                             ("poissoncomb(lambda=2)", 1e-8),
                                             ("poissoncomb(lambda=3,g=ramp)", 1e-8)])
def test_heavy_and_comb_densities_normalized(density_id, tol):
    density = parse_density(density_id)
    total = density.integrate(lambda x: float(density.pdf(np.array([x]))[0]))
    assert total.value == pytest.approx(1.0, abs=tol)


@pytest.mark.parametrize("density_id", ["normal", "gamma(a=2,b=1)", "logistic", "pareto(b=3)", "ramp(c=1)",
                                        "dgamma", "poissoncomb(lambda=2)"])
def test_cdf_derivative_is_pdf(density_id):
    """Central differences of the cdf match the pdf away from breakpoints."""
    density = parse_density(density_id)
    lo, hi = density.ppf(np.array([0.05, 0.95]))
    x = np.linspace(lo, hi, 23) + 1e-3
    x = x[np.abs(x - np.round(x)) > 1e-4]
    h = 1e-5
    slope = (density.cdf(x + h) - density.cdf(x - h)) / (2 * h)
    assert slope == pytest.approx(density.pdf(x), rel=1e-5, abs=1e-8)

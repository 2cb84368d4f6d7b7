"""
Tests for the L^r/L^s mismatch experiments and tail criteria
"""

import math
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent.parent / "src"))

from asymptotics.constants import constants, q_r, q_rs
from distributions.catalog import Normal, Uniform, parse_density
from mismatch.criteria import criterion_check, maximal_function_estimate
from mismatch.experiments import (cell_spread_profile, counterexample_codebook, counterexample_rates,
                                  critical_rate_experiment, empirical_measure_distance, increment_gap,
                                  lower_bound_check, loglog_slope, rate_table, rate_tables,
                                  sharp_rate_fit, supercritical_rate_experiment)
from quantizer.scalar import lloyd1d, midpoint_grid
from storage.database import CodebookCache
from utils.errors import PreconditionError


def test_counterexample_codebook_small_cases():
    assert counterexample_codebook(2, 1.0).points == pytest.approx([0.25, 0.75])
    assert counterexample_codebook(3, 1.0).points == pytest.approx([1 / 6, 1 / 2, 5 / 6])


def test_counterexample_rejects_theta_outside_interval():
    """θ must lie in (r/(r+1), s/(s+1)); r=2 needs θ > 2/3."""
    with pytest.raises(PreconditionError, match="0.666667"):
        counterexample_rates(0.5, 2.0, 4.0, [16, 32])


def test_counterexample_rates():
    """Optimal L^r rate, degraded L^s rate growing like n^{s-θ(s+1)}."""
    n_list = [2 ** k for k in range(4, 13)]
    report = counterexample_rates(0.75, 2.0, 4.0, n_list)
    assert report.target_exponent == pytest.approx(0.25)
    assert report.j_r == pytest.approx(1 / 12)
    # the approach to J_{r,1} is slow: n^{r-θ(r+1)} = n^{-1/4}
    assert report.r_ratio < 1.10
    ratios = [row.scaled_r / report.j_r for row in report.rows]
    assert all(b < a for a, b in zip(ratios, ratios[1:]))
    assert 0.20 <= report.fitted_exponent <= 0.30
    assert report.lower_dominated
    assert report.upper_respected
    assert report.eventually_increasing


def test_rate_table_uniform_is_constant():
    """Midpoint grids give n^s·D_s = J_{s,1} exactly."""
    table = rate_table(Uniform(), 2.0, 3.0, [4, 8, 16, 32])
    assert table.method == "exact-1d"
    assert table.scaled == pytest.approx(np.full(4, 1 / 32), rel=1e-8)
    assert table.monotone
    assert not table.supercritical


def test_rate_tables_share_quantizers_and_cache():
    cache = CodebookCache()
    cache.initialize()
    tables = rate_tables(Normal(), 2.0, [2.0, 2.5], [8, 16, 32], cache=cache)
    assert [t.s for t in tables] == [2.0, 2.5]
    assert len(cache.entries(Normal().id)) == 3
    again = rate_tables(Normal(), 2.0, [2.0], [8, 16, 32], cache=cache)
    assert again[0].scaled == pytest.approx(tables[0].scaled, rel=1e-15)
    cache.close()


def test_rate_table_rejects_unsorted_n():
    with pytest.raises(PreconditionError):
        rate_table(Uniform(), 2.0, 2.0, [8, 4])


def test_supercritical_flag_on_normal():
    """s >= d + r on an unbounded support is flagged."""
    table = rate_table(Normal(), 2.0, 3.5, [16, 32, 64])
    assert table.supercritical
    assert table.monotone


@pytest.mark.slow
def test_lower_bound_normal_zador_case():
    """n²·D_2 approaches Q_2(N(0,1)) = π√3/2."""
    table = rate_table(Normal(), 2.0, 2.0, [50, 100, 200, 400, 800])
    report = lower_bound_check(table, constants(Normal(), 2.0, 2.0))
    assert report.qrs == pytest.approx(math.pi * math.sqrt(3) / 2, rel=1e-10)
    assert not report.violated
    assert abs(report.ratio_last - 1.0) < 0.05


@pytest.mark.slow
def test_lower_bound_normal_mismatch_trend():
    """n^{2.5}·D_{2.5} of L^2-optimal quantizers stays above 0.9·Q_{2,2.5}."""
    table = rate_table(Normal(), 2.0, 2.5, [50, 100, 200, 400, 800])
    assert table.scaled[-1] >= 0.9 * q_rs(Normal(), 2.0, 2.5)
    assert not lower_bound_check(table, constants(Normal(), 2.0, 2.5)).violated


@pytest.mark.slow
def test_supercritical_scaled_column_grows():
    """s = 3.5 > d + r: the scaled column increases over the last three doublings."""
    table = rate_table(Normal(), 2.0, 3.5, [50, 100, 200, 400, 800])
    assert table.supercritical
    assert np.all(np.diff(table.scaled[-3:]) > 0)


def test_lower_bound_check_flags_violation():
    table = rate_table(Uniform(), 2.0, 2.0, [4, 8])
    assert lower_bound_check(table, 1.0).violated
    assert not lower_bound_check(table, 1 / 12).violated
    with pytest.raises(PreconditionError):
        lower_bound_check(table, math.inf)


def test_sharp_rate_fit_uniform():
    fit = sharp_rate_fit(Uniform(), 2.0, 3.0, [8, 16, 32, 64])
    assert fit.limit == pytest.approx(1 / 32, rel=1e-8)
    assert abs(fit.slope) < 1e-8


@pytest.mark.slow
def test_sharp_rate_fit_ramp():
    """c0 + c1/n fits on f = (2+2x)/3 with c0 near Q_{r,s}."""
    ramp = parse_density("ramp(c=1)")
    n_list = [100, 200, 400, 800]
    fit = sharp_rate_fit(ramp, 2.0, 4.0, n_list)
    assert fit.relative_error < 0.02
    zador = sharp_rate_fit(ramp, 2.0, 2.0, n_list)
    assert zador.limit == pytest.approx(q_r(ramp, 2.0), rel=0.02)
    assert fit.qrs == pytest.approx(q_rs(ramp, 2.0, 4.0))


def test_sharp_rate_fit_needs_compact_lipschitz():
    with pytest.raises(PreconditionError):
        sharp_rate_fit(Normal(), 2.0, 3.0, [8, 16])


@pytest.mark.parametrize("n", [1, 4, 25])
def test_empirical_distance_midpoint_grid(n):
    assert empirical_measure_distance(midpoint_grid(n), Uniform()) == pytest.approx(1 / (2 * n), rel=1e-12)


def test_empirical_distance_single_atom():
    book = lloyd1d(Normal(), 1, 2.0)
    distance = empirical_measure_distance(book, Normal())
    u = float(Normal(sigma=math.sqrt(3)).cdf(book.points)[0])
    assert distance <= max(u, 1 - u) + 1e-15


@pytest.mark.slow
def test_empirical_distance_normal():
    assert empirical_measure_distance(lloyd1d(Normal(), 500, 2.0), Normal()) < 0.05


def test_increment_gap_uniform():
    """(1/12)(1/n² - 1/(n+1)²)·n³ <= 1/6."""
    report = increment_gap(Uniform(), 2.0, [4, 8, 16, 32])
    for row in report.rows:
        assert row.increment == pytest.approx((1 / 12) * (1 / row.n ** 2 - 1 / (row.n + 1) ** 2), rel=1e-8)
    assert report.implied_c2 <= 0.17
    assert report.all_positive
    assert report.flagged == ()


@pytest.mark.slow
def test_increment_gap_normal_stable():
    report = increment_gap(Normal(), 2.0, [10, 20, 40, 80, 160])
    assert report.all_positive
    assert report.stability < 3


def test_cell_spread_profile_ramp():
    profile = cell_spread_profile(parse_density("ramp(c=1)"), 2.0, [10, 20, 40])
    assert [n for n, _ in profile] == [10, 20, 40]
    assert all(1.0 <= spread < 3.0 for _, spread in profile)
    with pytest.raises(PreconditionError):
        cell_spread_profile(Normal(), 2.0, [10])


def test_criterion_normal_radial_tail():
    """c must lie in (1, √((d+r)/s)) = (1, √1.2)."""
    report = criterion_check(Normal(), 2.0, 2.5)
    assert report.kind == "cor3-applies"
    assert 1.09 in report.passing_c
    assert 1.1 not in report.passing_c
    assert 1.5 not in report.passing_c


@pytest.mark.parametrize("s, kind", [(1.4, "cor3-applies"), (1.6, "none")])
def test_criterion_pareto(s, kind):
    """Pareto(b) passes iff s < b(1+r)/(b+1) = 1.5 for b=3, r=1."""
    assert criterion_check(parse_density("pareto(b=3)"), 1.0, s).kind == kind


def test_criterion_poisson_comb_growth_control():
    report = criterion_check(parse_density("poissoncomb(lambda=2)"), 2.0, 2.5)
    assert report.kind == "cor4-applies"
    assert report.growth_ratio >= 0.02


def test_criterion_without_tail_metadata():
    report = criterion_check(Uniform(), 2.0, 2.5)
    assert report.kind == "none"
    assert "tail metadata" in report.explanation


def test_maximal_function_uniform_interior():
    books = [midpoint_grid(4), midpoint_grid(8)]
    grid = np.linspace(0.01, 0.99, 50)
    est = maximal_function_estimate(Uniform(), books, 0.25, x_grid=grid, m=20_000, seed=1)
    assert np.all(est.values >= 1.0 - 1e-12)
    assert np.all(est.values <= 2.0 + 1e-12)
    assert est.infinite_points == 0


def test_maximal_function_zero_at_codepoints():
    """A ball of radius 0 contributes 0 (0/0 := 0)."""
    book = midpoint_grid(4)
    est = maximal_function_estimate(Uniform(), [book], 0.25, x_grid=book.points, m=20_000, seed=1)
    assert np.all(est.values == 0.0)


def test_maximal_function_normal_integral_finite():
    books = [lloyd1d(Normal(), n, 2.0) for n in (8, 16, 32)]
    est = maximal_function_estimate(Normal(), books, 0.25, s=2.5, m=20_000, seed=2)
    assert est.exponent == pytest.approx(2.5 / 3)
    assert math.isfinite(est.criterion_integral)
    assert est.criterion_integral < 1e3


def test_maximal_function_rejects_bad_b():
    with pytest.raises(PreconditionError):
        maximal_function_estimate(Uniform(), [midpoint_grid(2)], 0.5)


@pytest.mark.slow
def test_critical_rate_experiment_runs_at_s_equal_d_plus_r():
    report = critical_rate_experiment(Normal(), 2.0, [16, 32, 64, 128])
    assert report.table.s == 3.0
    assert math.isfinite(report.growth_slope)


@pytest.mark.slow
def test_supercritical_rate_experiment_normal():
    report = supercritical_rate_experiment(Normal(), 1.0, 2.5, [16, 32, 64, 128])
    assert report.criterion_kind == "supercritical"
    assert report.admitted_exponents is not None
    assert report.observed_exponent > 0
    assert report.consistent


def test_supercritical_experiment_needs_large_s():
    with pytest.raises(PreconditionError):
        supercritical_rate_experiment(Normal(), 2.0, 2.5, [16, 32])


def test_loglog_slope():
    x = [1, 2, 4, 8]
    assert loglog_slope(x, [v ** -1.5 for v in x]) == pytest.approx(-1.5)

"""
Tests for trained quantizers on R^d and Monte Carlo distortions
"""

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent.parent / "src"))

from distributions.catalog import Normal, Uniform
from quantizer.scalar import lloyd1d, midpoint_grid
from quantizer.vector import (CodebookND, _combine, mc_distortion, nearest, stationarity_gap,
                              stationarity_report, to_nd, train_nd)
from utils.errors import CodebookError, PreconditionError
from utils.norms import use_norm


def test_single_point_is_centroid_of_square():
    book = train_nd(Uniform(d=2), 1, 2.0, "lloyd-mc", seed=1, budget=200_000)
    assert book.points[0] == pytest.approx([0.5, 0.5], abs=5e-3)
    assert book.weights == pytest.approx([1.0])


def test_single_point_is_mean_of_gaussian():
    book = train_nd(Normal(d=2), 1, 2.0, seed=2, budget=200_000)
    assert book.points[0] == pytest.approx([0.0, 0.0], abs=5e-3)


def test_lloyd_mc_matches_exact_1d():
    """Sample Lloyd on U([0,1]) lands near the midpoint grid."""
    book = train_nd(Uniform(), 4, 2.0, "lloyd-mc", seed=3, budget=200_000)
    assert np.sort(book.points[:, 0]) == pytest.approx(midpoint_grid(4).points, abs=5e-3)


def test_clvq_for_non_quadratic_exponent():
    """r < 1 is trained by the stochastic gradient method."""
    book = train_nd(Uniform(), 2, 0.5, seed=4, budget=4000)
    assert book.train_meta["method"] == "clvq"
    assert np.all((book.points > 0) & (book.points < 1))


def test_clvq_default_step_is_scale_free():
    """The first step gamma0·r·|x - a|^(r-1) is about 0.5·r·spread for every r."""
    quadratic = train_nd(Normal(sigma=3.0), 3, 2.0, "clvq", seed=4, budget=6000)
    assert quadratic.train_meta["gamma0"] == 0.5
    cubic = train_nd(Normal(sigma=3.0), 3, 3.0, "clvq", seed=4, budget=6000)
    assert cubic.train_meta["gamma0"] * 3.0 == pytest.approx(0.5, rel=0.05)


def test_train_rejects_small_budget():
    with pytest.raises(PreconditionError):
        train_nd(Uniform(), 10, 2.0, seed=0, budget=100)


def test_mc_distortion_midpoint_grid():
    """MC estimate of 1/192 within three standard errors."""
    est = mc_distortion(midpoint_grid(4), Uniform(), 2.0, m=200_000, seed=5)
    assert abs(est.estimate - 1 / 192) <= 3 * est.stderr
    assert est.count == 200_000
    assert not est.tail_warning


def test_mc_distortion_center_of_square():
    """E‖X - (½,½)‖² = 1/6 on the unit square."""
    book = CodebookND(np.array([[0.5, 0.5]]), 2.0, Uniform(d=2).id, np.array([1.0]))
    est = mc_distortion(book, Uniform(d=2), 2.0, m=200_000, seed=6)
    assert abs(est.estimate - 1 / 6) <= 3 * est.stderr


def test_mc_distortion_independent_of_workers():
    book = to_nd(lloyd1d(Normal(), 5, 2.0))
    serial = mc_distortion(book, Normal(), 3.0, m=100_000, seed=7, workers=1)
    threaded = mc_distortion(book, Normal(), 3.0, m=100_000, seed=7, workers=4)
    assert serial == threaded


def test_combine_matches_pooled_statistics():
    rng = np.random.default_rng(0)
    data = rng.random(1000)
    parts = []
    for chunk in np.split(data, [100, 350, 700]):
        mean = chunk.mean()
        parts.append((len(chunk), mean, float(np.sum((chunk - mean) ** 2)), chunk.max()))
    count, mean, m2, peak = _combine(parts)
    assert count == 1000
    assert mean == pytest.approx(data.mean(), rel=1e-12)
    assert m2 == pytest.approx(np.sum((data - data.mean()) ** 2), rel=1e-10)
    assert peak == data.max()


def test_nearest_breaks_ties_to_lower_index():
    book = CodebookND(np.array([[0.0, 0.0], [2.0, 0.0]]), 2.0, "test", np.array([0.5, 0.5]))
    assert nearest(book, [1.0, 0.0]) == (0, 1.0)
    idx, dist = nearest(book, np.array([[1.9, 0.0], [-1.0, 0.0]]))
    assert list(idx) == [1, 0]
    assert dist == pytest.approx([0.1, 1.0])


def test_sup_norm_changes_distances():
    book = CodebookND(np.array([[0.0, 0.0]]), 2.0, "test", np.array([1.0]), norm="sup")
    with use_norm("sup"):
        assert nearest(book, [1.0, 1.0])[1] == pytest.approx(1.0)


def test_codebook_nd_rejects_duplicates():
    with pytest.raises(CodebookError):
        CodebookND(np.array([[0.0, 0.0], [0.0, 0.0]]), 2.0, "test", np.array([0.5, 0.5]))


def test_stationarity_gap_of_lloyd_codebook():
    book = lloyd1d(Normal(), 6, 2.0)
    report = stationarity_report(book, Normal(), m=200_000, seed=8)
    assert report.gap <= 3 * report.stderr + 1e-3
    assert stationarity_gap(book, Normal(), m=200_000, seed=8) == report.gap
    assert report.excluded == ()


def test_nearest_matches_brute_force():
    rng = np.random.default_rng(11)
    book = CodebookND(rng.normal(size=(50, 3)), 2.0, Normal(d=3).id, np.full(50, 1 / 50))
    queries = rng.normal(size=(10_000, 3))
    idx, dist = nearest(book, queries)
    full = np.linalg.norm(queries[:, None, :] - book.points[None, :, :], axis=2)
    assert np.array_equal(idx, np.argmin(full, axis=1))
    assert dist == pytest.approx(full.min(axis=1), rel=1e-12)


@pytest.mark.parametrize("order", [(0, 1, 2, 3), (3, 2, 1, 0), (2, 0, 3, 1), (1, 3, 0, 2)])
def test_four_way_tie_goes_to_lowest_index(order):
    """The centre of a square is equidistant from all four corners."""
    corners = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])[list(order)]
    book = CodebookND(np.vstack([[[5.0, 5.0]], corners]), 2.0, Uniform(d=2).id, np.full(5, 0.2))
    index, distance = nearest(book, [0.5, 0.5])
    assert index == 1
    assert distance == pytest.approx(np.sqrt(0.5))


@pytest.mark.parametrize("order", [(0, 1, 2), (2, 1, 0), (1, 2, 0)])
def test_three_way_tie_goes_to_lowest_index(order):
    ring = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0]])[list(order)]
    book = CodebookND(np.vstack([[[4.0, 4.0], [0.0, -3.0]], ring]), 2.0, "test", np.full(5, 0.2))
    idx, dist = nearest(book, np.zeros((3, 2)))
    assert list(idx) == [2, 2, 2]
    assert dist == pytest.approx([1.0, 1.0, 1.0])


def test_lloyd_mc_history_never_increases():
    book = train_nd(Normal(d=2), 8, 2.0, "lloyd-mc", seed=3)
    history = np.array(book.train_meta["history"])
    assert len(history) >= 2
    assert np.all(np.diff(history) <= 1e-12 * history[0])


def test_distortion_scales_with_the_law():
    """Quantizing 2·X with 2·α multiplies the L^s distortion by 2^s."""
    book = train_nd(Normal(d=2), 6, 2.0, "lloyd-mc", seed=4)
    wide = CodebookND(2 * book.points, 2.0, Normal(d=2, sigma=2.0).id, book.weights)
    for s in (1.0, 2.0, 3.0):
        base = mc_distortion(book, Normal(d=2), s, m=50_000, seed=9)
        scaled = mc_distortion(wide, Normal(d=2, sigma=2.0), s, m=50_000, seed=9)
        tolerance = 4 * np.hypot(scaled.stderr, 2 ** s * base.stderr)
        assert abs(scaled.estimate - 2 ** s * base.estimate) <= tolerance

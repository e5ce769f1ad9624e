import math

import numpy as np
import pytest
from scipy.special import digamma

from plregions.netgen import InitSpec, he_init
from plregions.network import Network
from plregions.region2d import SliceFrame, enumerate_plane
from plregions.theory import (EULER_GAMMA, boundary_density, corollary_bounds, crofton_check,
                              distance_lower_bound, expected_crossings_k1, gradient_moment_check,
                              jacobian_volume, log_gradient_check, log_gradient_prediction,
                              open_path_probability, preactivation_moment_check,
                              single_neuron_crossing_probability, tube_area, tube_geometry,
                              tube_volume_check)


def test_k1_single_neuron_against_closed_form():
    w = np.array([[1.0, 2.0]])
    net = Network((w, np.array([[1.0]])), (np.zeros(1), np.zeros(1)))
    p0, p1 = [-0.5, 0.0], [0.5, 0.2]
    rep = expected_crossings_k1(net, 0.7, p0, p1, n_bias_draws=3000, seed=1)
    exact = single_neuron_crossing_probability(w[0], p0, p1, 0.7)
    assert rep.passed
    assert abs(rep.estimate - exact) <= 3 * rep.details["se_lhs"] + 1e-12
    assert abs(rep.theory - exact) <= 3 * rep.details["se_rhs"] + 1e-12


def test_k1_small_deep_net():
    net = he_init(InitSpec((2, 3, 3, 1), 0.5, seed=4))
    rep = expected_crossings_k1(net, 0.5, [-1.0, -1.0], [1.0, 1.0], n_bias_draws=1500, seed=2)
    assert rep.passed, rep.line()


def test_boundary_density_of_one_line():
    net = Network((np.array([[1.0, 0.0]]), np.array([[1.0]])), (np.zeros(1), np.zeros(1)))
    assert boundary_density(net, (0.0, 0.0), 1.0, 1) == pytest.approx(0.5)
    assert boundary_density(net, (0.0, 0.0), 1.0, 2) == 0.0
    cross = Network((np.eye(2), np.ones((1, 2))), (np.zeros(2), np.zeros(1)))
    assert boundary_density(cross, (0.0, 0.0), 1.0, 2) == pytest.approx(0.25)


def test_corollary_upper_bound_small():
    spec = InitSpec((2, 6, 6, 1), 1.0)
    rep = corollary_bounds(spec, 1, n_seeds=5, n_grad_seeds=50, seed=0)
    assert rep.passed and rep.details["n_below_upper"] == 5
    assert rep.details["lower"] < rep.details["upper"]
    with pytest.raises(ValueError):
        corollary_bounds(InitSpec((3, 4, 1)), 1)


def test_gradient_and_preactivation_moments():
    spec = InitSpec((16, 16, 16, 16, 1), 0.0)
    x = np.ones(16)
    g = gradient_moment_check(spec, x, n_seeds=400, rtol=0.1)
    assert g.passed, g.line()
    p = preactivation_moment_check(spec, x, n_seeds=400, rtol=0.1)
    assert p.passed, p.line()


def test_preactivation_bias_term_is_halved():
    # with large biases the exact propagation carries half the bias variance
    spec = InitSpec((16, 16, 16, 16, 1), 1.0)
    rep = preactivation_moment_check(spec, np.ones(16), n_seeds=1500)
    means, exact = rep.details["per_layer_mean"], rep.details["exact"]
    np.testing.assert_allclose(means, exact, rtol=0.08)


def test_log_gradient_prediction_matches_its_model():
    # simulate the model directly: gates are fair coins, weights Gaussian
    rng = np.random.default_rng(0)
    widths, layer = (8, 8, 8), 3
    pred = log_gradient_prediction(widths, layer)
    n_draws = 200_000
    total = np.log(rng.chisquare(1, n_draws))
    for n in widths[:layer - 1]:
        K = rng.binomial(n, 0.5, n_draws)
        while np.any(K == 0):
            K[K == 0] = rng.binomial(n, 0.5, int(np.sum(K == 0)))
        total += np.log(2.0 / n * rng.chisquare(K)) + math.log(2.0)
    # the factor 2 of the first layer's weight variance cancels against n_in
    sim = float(np.mean(total)) - math.log(2.0)
    assert sim == pytest.approx(pred["exact"], abs=0.02)


def test_log_gradient_leading_term_converges():
    for n in (16, 32, 128):
        p = log_gradient_prediction((n, n, n), 3)
        assert abs(p["exact"] - p["leading"]) <= p["slack"]
    assert log_gradient_prediction((8,), 1)["exact"] == pytest.approx(-EULER_GAMMA)
    # E psi(K/2) for K ~ Bin(2, 1/2) conditioned on K >= 1
    p = log_gradient_prediction((2, 4), 2)
    expect = -EULER_GAMMA + math.log(2.0) + (2 * digamma(0.5) + digamma(1.0)) / 3
    assert p["exact"] == pytest.approx(expect)


def test_log_gradient_and_open_path_checks():
    spec = InitSpec((16, 32, 32, 32, 1), 0.0)
    x = np.ones(16)
    assert log_gradient_check(spec, x, n_seeds=500).passed
    rep = open_path_probability(spec, x, n_seeds=500)
    assert rep.passed
    assert abs(rep.details["open_frequency"] - 0.5) < 0.02


def test_tube_area_against_polygon_buffer():
    shapely = pytest.importorskip("shapely")
    from shapely.geometry import LineString, box
    from shapely.ops import unary_union
    net = he_init(InitSpec((2, 8, 8, 1), 1.0, seed=3))
    arena = enumerate_plane(net, SliceFrame.axis_aligned(2, 2.0))
    segs, L, V = tube_geometry(arena)
    eps = 0.02
    exact = unary_union([LineString(s).buffer(eps, 64) for s in segs]).intersection(
        box(-1, -1, 1, 1)).area
    area, se = tube_area(arena, eps, 200_000, seed=0)
    assert abs(area - exact) <= 4 * se
    rep = tube_volume_check(arena, [eps, 0.002], n_mc=50_000)
    assert rep.passed


def test_crofton():
    net = he_init(InitSpec((2, 16, 16, 1), 1.0, seed=0))
    arena = enumerate_plane(net, SliceFrame.axis_aligned(2, 2.0))
    assert crofton_check(net, arena, n_lines=300).passed


def test_jacobian_volume():
    J = np.random.default_rng(0).standard_normal((2, 5))
    s = np.linalg.svd(J, compute_uv=False)
    assert jacobian_volume(J) == pytest.approx(s.prod())


def test_distance_lower_bound_reports():
    rep = distance_lower_bound(InitSpec((2, 8, 8, 1), 1.0), (0.0, 0.0), 1.0, n_seeds=2,
                               n_samples=200, n_grad_seeds=30)
    assert rep.kind == "lower" and rep.theory > 0 and rep.estimate > 0
    assert rep.to_dict()["details"]["neurons"] == 16

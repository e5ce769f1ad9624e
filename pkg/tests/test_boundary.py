import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from plregions.boundary import (ConfigurationError, SampleSpec, boundary_distances,
                                distance_histogram, distance_report, distance_to_boundary,
                                draw_samples, gradient_norms, log_histogram,
                                verify_distance_exactness)
from plregions.data import synth_blobs
from plregions.network import Network, local_affine, preactivation_jacobians

from conftest import small_net


def polytope_distance(net, x):
    """Distance to the nearest pre-activation hyperplane of the region's local pieces.

    Each hidden layer's pre-activations are affine on the region; their maps
    come from the truncated networks' local affine maps.
    """
    best = math.inf
    for j in range(1, net.depth + 1):
        A = local_affine(net.truncated(j), x)
        for xi in net.activation.xi:
            val = A.A @ x + A.c - xi
            nrm = np.linalg.norm(A.A, axis=1)
            ok = nrm > 0
            if ok.any():
                best = min(best, float(np.min(np.abs(val[ok]) / nrm[ok])))
    return best


@given(st.integers(0, 10_000))
def test_formula_matches_region_polytope(seed):
    net = small_net((4, 7, 6, 2), seed=seed)
    x = np.random.default_rng(seed).standard_normal(4)
    assert distance_to_boundary(net, x).distance == pytest.approx(polytope_distance(net, x),
                                                                  rel=1e-10)


@pytest.mark.parametrize("seed", range(5))
def test_directional_oracle(seed):
    net = small_net((3, 6, 6, 1), seed=seed)
    x = np.random.default_rng(seed).standard_normal(3)
    rec = verify_distance_exactness(net, x, n_directions=200, seed=seed)
    assert rec.lower_bound_ok and rec.bisection_ok
    assert rec.filtered >= rec.formula


def test_gradient_norms_match_jacobians(net3, rng):
    X = rng.standard_normal((10, 3))
    norms = gradient_norms(net3, X)
    for i, x in enumerate(X):
        for j, J in enumerate(preactivation_jacobians(net3, x)):
            np.testing.assert_allclose(norms[j][i], np.linalg.norm(J, axis=1), rtol=1e-12)


def test_on_boundary_and_dead_points():
    net = Network((np.array([[1.0, 0.0]]), np.array([[1.0]])), (np.zeros(1), np.zeros(1)))
    res = distance_to_boundary(net, [0.0, 3.0])
    assert res.distance == 0.0 and res.on_boundary
    assert distance_to_boundary(net, [2.0, 0.0]).distance == pytest.approx(2.0)
    dead = Network((np.zeros((1, 2)), np.array([[1.0]])), (np.ones(1), np.zeros(1)))
    d = distance_to_boundary(dead, [0.0, 0.0])
    assert math.isinf(d.distance) and d.neuron is None


def test_filtered_never_smaller(net3, rng):
    X = rng.standard_normal((200, 3))
    d = boundary_distances(net3, X)[0]
    f = boundary_distances(net3, X, filtered=True)[0]
    assert np.all(f >= d)


def test_chunking_and_threads_do_not_change_results(net3, rng):
    X = rng.standard_normal((300, 3))
    a = boundary_distances(net3, X, chunk=512)
    b = boundary_distances(net3, X, chunk=7, threads=3)
    for u, v in zip(a, b):
        np.testing.assert_array_equal(u, v)


def test_sampling_sources():
    data = synth_blobs(2, 50, 3, 2.0, seed=0)
    X = draw_samples(SampleSpec("gaussian", 5000, 1), 3, data)
    mean, var = data.moments()
    np.testing.assert_allclose(X.mean(axis=0), mean, atol=0.1)
    assert draw_samples(SampleSpec("uniform-cube", 10), 3).shape == (10, 3)
    with pytest.raises(ConfigurationError):
        draw_samples(SampleSpec("gaussian", 10), 3)
    with pytest.raises(ConfigurationError):
        draw_samples(SampleSpec("dataset-test", 10), 3, data)
    with pytest.raises(ValueError):
        SampleSpec("nope", 10)


def test_reports(net3):
    data = synth_blobs(2, 100, 3, 2.0)
    rep = distance_histogram(net3, SampleSpec("dataset-train", 500, 0), data, bins=20)
    assert rep.hist_counts.sum() == np.sum(np.isfinite(rep.distances) & (rep.distances > 0))
    assert rep.mean_times_neurons == pytest.approx(rep.mean * net3.n_hidden)
    s = rep.summary()
    assert s["count"] == 500 and s["min"] <= s["quantiles"]["0.5"] <= s["max"]
    counts, edges = log_histogram([0.0, math.inf, 1.0, 10.0], bins=2)
    assert counts.sum() == 2
    assert distance_report(net3, data.inputs[:5]).distances.shape == (5,)

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from plregions.netgen import (InitSpec, bias_density_stats, build_sawtooth, he_init,
                              lower_bound_eta, perturb, sawtooth_reference, triangle)
from plregions.region1d import count_regions_on_segment


def test_he_init_is_deterministic():
    spec = InitSpec((10, 8, 8, 1), seed=3)
    a, b = he_init(spec), he_init(spec)
    for wa, wb in zip(a.weights, b.weights):
        assert wa.tobytes() == wb.tobytes()
    assert not np.array_equal(he_init(spec.with_seed(4)).weights[0], a.weights[0])


def test_he_init_weight_variance():
    net = he_init(InitSpec((400, 300, 1), 0.0, seed=0))
    w = net.weights[0]
    assert abs(w.var() * 400 / 2 - 1) < 0.02
    assert np.all(net.biases[0] == 0)


def test_two_point_law():
    w = he_init(InitSpec((50, 40, 1), weight_law="two-point")).weights[0]
    np.testing.assert_allclose(np.abs(w), math.sqrt(2 / 50))


def test_bad_specs():
    with pytest.raises(ValueError):
        InitSpec((3,))
    with pytest.raises(ValueError):
        InitSpec((3, 2, 1), bias_sd=-1)
    with pytest.raises(ValueError):
        InitSpec((3, 2, 1), bias_sd=(1.0, 1.0, 1.0)).bias_sds


@pytest.mark.parametrize("n", [1, 2, 3, 4, 5])
def test_sawtooth_matches_reference(n):
    net = build_sawtooth(n)
    assert net.n_neurons == 3 * n + 4
    x = np.linspace(0, 1, 2001)[:, None]
    np.testing.assert_allclose(net(x)[:, 0], sawtooth_reference(x[:, 0], n), atol=1e-12)


@pytest.mark.parametrize("n", [1, 2, 3, 4, 5])
def test_sawtooth_piece_count_matches_reference_kinks(n):
    # the reference is the (n+1)-fold tent map: 2**(n+1) linear pieces on [0, 1]
    xs = np.linspace(0, 1, 2 ** (n + 6) + 1)
    ys = sawtooth_reference(xs, n)
    slopes = np.round(np.diff(ys) / np.diff(xs), 6)
    oracle = 1 + int(np.sum(slopes[1:] != slopes[:-1]))
    part = count_regions_on_segment(build_sawtooth(n), [0.0], [1.0])
    assert part.n_regions == oracle == 2 ** (n + 1)


def test_triangle():
    np.testing.assert_allclose(triangle([0, 0.25, 0.5, 1, 2]), [0, 0.5, 1, 0, 0])


def test_perturb_zero_is_identity_and_seeded():
    net = build_sawtooth(2)
    same = perturb(net, 0.0)
    assert all(np.array_equal(a, b) for a, b in zip(net.weights, same.weights))
    a, b = perturb(net, 0.1, seed=5), perturb(net, 0.1, seed=5)
    assert all(np.array_equal(x, y) for x, y in zip(a.weights, b.weights))
    with pytest.raises(ValueError):
        perturb(net, -1.0)


@given(st.floats(0.05, 5.0), st.floats(0.0, 3.0))
def test_bias_density_constants(sd, eta):
    d = bias_density_stats(sd, eta)
    assert d.C_bias == pytest.approx(1 / (sd * math.sqrt(2 * math.pi)))
    assert d.c_bias <= d.C_bias


def test_lower_bound_eta_formula():
    eta = lower_bound_eta(2.0, 2, [1.0, 1.0], [4, 4], C_prime=1.0)
    assert eta == pytest.approx((1.0 + 2.0) * math.exp(0.5))

import math

import numpy as np
import pytest

from plregions.data import synth_blobs
from plregions.netgen import InitSpec, he_init
from plregions.network import Network, ShapeError
from plregions.region2d import SliceFrame
from plregions.training import (METRIC_COLUMNS, Probes, TrainConfig, TrainingDiverged,
                                dense_schedule, evaluate, loss_and_grads, make_probes,
                                track_complexity, train)


def _flat(ws, bs):
    return np.concatenate([a.ravel() for a in list(ws) + list(bs)])


def _unflat(net, theta):
    ws, bs, i = [], [], 0
    for w in net.weights:
        ws.append(theta[i:i + w.size].reshape(w.shape))
        i += w.size
    for b in net.biases:
        bs.append(theta[i:i + b.size])
        i += b.size
    return net.with_params(ws, bs)


@pytest.mark.parametrize("loss", ["softmax-ce", "mse"])
def test_gradients_match_finite_differences(loss):
    # 2 -> 2 -> 2 network: 6 + 6 = 12 parameters
    net = he_init(InitSpec((2, 2, 2), 0.5, seed=3))
    rng = np.random.default_rng(0)
    X = rng.standard_normal((16, 2))
    Y = np.eye(2)[rng.integers(0, 2, 16)]
    _, gw, gb = loss_and_grads(net, X, Y, loss)
    g = _flat(gw, gb)
    theta = _flat(net.weights, net.biases)
    h = 1e-6
    for i in rng.choice(theta.size, size=min(20, theta.size), replace=False):
        e = np.zeros_like(theta)
        e[i] = h
        fp = loss_and_grads(_unflat(net, theta + e), X, Y, loss)[0]
        fm = loss_and_grads(_unflat(net, theta - e), X, Y, loss)[0]
        fd = (fp - fm) / (2 * h)
        assert abs(fd - g[i]) <= 1e-4 * max(abs(fd), abs(g[i]), 1e-8) + 1e-9


def test_breakpoint_subgradient_is_right_slope():
    net = Network((np.array([[1.0]]), np.array([[1.0]])), (np.zeros(1), np.zeros(1)))
    # pre-activation exactly 0: the right piece (slope 1) passes the error back
    _, _, gb = loss_and_grads(net, np.array([[0.0]]), np.array([[1.0]]), "mse")
    assert gb[0][0] == pytest.approx(-1.0)


def test_zero_learning_rate_is_a_no_op():
    data = synth_blobs(2, 50, 3, 3.0)
    net = he_init(InitSpec((3, 5, 2), seed=1))
    cks = train(net, data, TrainConfig(lr=0.0, epochs=2, schedule=(0.0, 2.0)))
    last = cks[-1].net
    assert all(a.tobytes() == b.tobytes() for a, b in zip(net.weights, last.weights))
    assert all(a.tobytes() == b.tobytes() for a, b in zip(net.biases, last.biases))


@pytest.mark.parametrize("optimizer,lr", [("sgd", 0.05), ("adam", 1e-3)])
def test_loss_decreases_on_two_gaussians(optimizer, lr):
    data = synth_blobs(2, 200, 2, 2.0, seed=0)
    net = he_init(InitSpec((2, 8, 8, 2), 1e-3, seed=0))
    cfg = TrainConfig(optimizer, lr, 32, 5, schedule=tuple(range(6)), seed=0)
    losses = [c.train_loss for c in train(net, data, cfg)]
    assert all(b < a for a, b in zip(losses, losses[1:])), losses


def test_training_is_deterministic():
    data = synth_blobs(3, 60, 4, 3.0, seed=1)
    net = he_init(InitSpec((4, 6, 6, 3), seed=2))
    cfg = TrainConfig(epochs=2, schedule=dense_schedule(2, 4), seed=7)
    probes = make_probes(data, 5, 50, seed=0, frame=SliceFrame.axis_aligned(4, 2.0))
    a = track_complexity(train(net, data, cfg), probes)
    b = track_complexity(train(net, data, cfg), probes, threads=3)
    assert repr(a) == repr(b)
    assert set(a[0]) == set(METRIC_COLUMNS)
    assert a[0]["n_regions_2d"] >= 1


def test_divergence_keeps_last_good_checkpoint():
    data = synth_blobs(2, 100, 2, 2.0)
    net = he_init(InitSpec((2, 8, 8, 2), seed=0))
    cfg = TrainConfig("sgd", 1e6, 8, 3, "mse", schedule=(0.0, 1.0, 2.0, 3.0))
    with pytest.raises(TrainingDiverged) as info:
        train(net, data, cfg)
    assert info.value.last_good is not None
    assert info.value.last_good.epoch_fraction == 0.0
    assert math.isfinite(info.value.last_good.train_loss)


def test_config_and_shape_validation():
    with pytest.raises(ValueError):
        TrainConfig(optimizer="rmsprop")
    with pytest.raises(ValueError):
        TrainConfig(batch_size=0)
    with pytest.raises(ValueError):
        TrainConfig(epochs=1, schedule=(2.0,))
    data = synth_blobs(2, 10, 3, 1.0)
    with pytest.raises(ShapeError):
        train(he_init(InitSpec((4, 3, 2))), data, TrainConfig(epochs=1))


def test_schedule_and_evaluate():
    s = dense_schedule(3, 5, 0.5)
    assert s[:3] == (0.0, 0.1, 0.2) and s[-3:] == (1.0, 2.0, 3.0)
    data = synth_blobs(2, 20, 2, 1.0)
    loss, acc = evaluate(he_init(InitSpec((2, 4, 2))), data)
    assert loss > 0 and 0 <= acc <= 1
    assert Probes().lines == ()

"""Minibatch SGD/Adam with hand-written backpropagation, plus complexity tracking."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .boundary import boundary_distances
from .data import Dataset
from .network import Network, ShapeError
from .region1d import count_lines
from .region2d import SliceFrame, enumerate_plane

OPTIMIZERS = ("sgd", "adam")
LOSSES = ("softmax-ce", "mse")
ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8


@dataclass(frozen=True)
class TrainConfig:
    optimizer: str = "adam"
    lr: float = 1e-3
    batch_size: int = 32
    epochs: int = 20
    loss: str = "softmax-ce"
    schedule: tuple[float, ...] = (0.0, 1.0)   # epoch fractions at which to checkpoint
    seed: int = 0

    def __post_init__(self):
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"optimizer must be one of {OPTIMIZERS}")
        if self.loss not in LOSSES:
            raise ValueError(f"loss must be one of {LOSSES}")
        if not self.lr >= 0:
            raise ValueError("learning rate must be >= 0")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch size must be >= 1 and epochs >= 0")
        sched = tuple(sorted({float(f) for f in self.schedule}))
        if sched and (sched[0] < 0 or sched[-1] > self.epochs):
            raise ValueError("checkpoint fractions must lie in [0, epochs]")
        object.__setattr__(self, "schedule", sched)


def dense_schedule(epochs: int, early: int = 10, early_span: float = 0.5) -> tuple[float, ...]:
    """``early`` evenly spaced checkpoints in the first ``early_span`` epochs, then one per epoch."""
    first = np.round(np.linspace(0.0, early_span, early + 1), 12)
    return tuple(sorted(set(first.tolist()) | set(range(1, epochs + 1))))


@dataclass(frozen=True, eq=False)
class Checkpoint:
    epoch_fraction: float
    net: Network
    train_loss: float
    train_acc: float
    test_loss: float = math.nan
    test_acc: float = math.nan


class TrainingDiverged(RuntimeError):
    def __init__(self, step: int, last_good: Checkpoint | None, checkpoints: list):
        super().__init__(f"loss became non-finite at step {step}")
        self.step = step
        self.last_good = last_good
        self.checkpoints = checkpoints


def _loss_grads(W, B, act, X, Y, loss):
    q = act.q
    a = X
    acts, slopes = [X], []
    for w, b in zip(W[:-1], B[:-1]):
        z = a @ w.T + b
        slopes.append(q[act.piece_index(z)])
        a = act(z)
        acts.append(a)
    out = a @ W[-1].T + B[-1]
    n = X.shape[0]
    if loss == "softmax-ce":
        s = out - out.max(axis=1, keepdims=True)
        logp = s - np.log(np.exp(s).sum(axis=1, keepdims=True))
        value = -float(np.sum(Y * logp)) / n
        delta = (np.exp(logp) - Y) / n
    else:
        r = out - Y
        value = 0.5 * float(np.sum(r * r)) / n
        delta = r / n
    gw, gb = [None] * len(W), [None] * len(W)
    for j in range(len(W) - 1, -1, -1):
        gw[j] = delta.T @ acts[j]
        gb[j] = delta.sum(axis=0)
        if j > 0:
            delta = (delta @ W[j]) * slopes[j - 1]
    return value, gw, gb


def loss_and_grads(net: Network, X, Y, loss: str = "softmax-ce"):
    """Mean loss over the batch and its gradient for every weight and bias.

    ``Y`` holds one-hot (or real-valued, for mse) targets.  At a breakpoint
    the slope of the right-hand piece is used.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    return _loss_grads(net.weights, net.biases, net.activation, X, Y, loss)


def evaluate(net: Network, data: Dataset, loss: str = "softmax-ce", chunk: int = 8192):
    """(mean loss, accuracy) over a whole dataset."""
    total, correct = 0.0, 0
    for i in range(0, len(data), chunk):
        X = data.inputs[i:i + chunk]
        y = data.labels[i:i + chunk]
        out = net(X)
        if loss == "softmax-ce":
            s = out - out.max(axis=1, keepdims=True)
            logp = s - np.log(np.exp(s).sum(axis=1, keepdims=True))
            total -= float(logp[np.arange(y.size), y].sum())
        else:
            r = out - np.eye(out.shape[1])[y]
            total += 0.5 * float(np.sum(r * r))
        correct += int(np.sum(out.argmax(axis=1) == y))
    return total / len(data), correct / len(data)


def train(net: Network, data: Dataset, config: TrainConfig,
          test: Dataset | None = None) -> list[Checkpoint]:
    """Train a copy of ``net``; returns checkpoints at the scheduled epoch fractions.

    Shuffling uses its own generator seeded from ``config.seed``, so equal
    configs give bit-identical runs.
    """
    if data.dim != net.input_dim:
        raise ShapeError(f"dataset has dimension {data.dim}, network expects {net.input_dim}")
    if int(data.labels.max()) >= net.output_dim:
        raise ShapeError(f"{data.n_classes} classes but {net.output_dim} outputs")
    W = [np.array(w) for w in net.weights]
    B = [np.array(b) for b in net.biases]
    m = [np.zeros_like(p) for p in W + B]
    v = [np.zeros_like(p) for p in W + B]
    b1, b2 = ADAM_BETAS
    N, bs = len(data), config.batch_size
    steps_per_epoch = math.ceil(N / bs)
    stops = {int(round(f * steps_per_epoch)): f for f in config.schedule}
    rng = np.random.default_rng(config.seed)
    checkpoints: list[Checkpoint] = []

    def snapshot(step):
        if not all(np.all(np.isfinite(a)) for a in W + B):
            raise TrainingDiverged(step, checkpoints[-1] if checkpoints else None, checkpoints)
        cur = net.with_params(W, B, trained_steps=step)
        tl, ta = evaluate(cur, data, config.loss)
        el, ea = evaluate(cur, test, config.loss) if test is not None else (math.nan, math.nan)
        if not math.isfinite(tl):
            raise TrainingDiverged(step, checkpoints[-1] if checkpoints else None, checkpoints)
        checkpoints.append(Checkpoint(stops[step], cur, tl, ta, el, ea))

    step = 0
    if 0 in stops:
        snapshot(0)
    eye = np.eye(net.output_dim)
    for _ in range(config.epochs):
        perm = rng.permutation(N)
        for i in range(0, N, bs):
            idx = perm[i:i + bs]
            with np.errstate(over="ignore", invalid="ignore"):
                value, gw, gb = _loss_grads(W, B, net.activation, data.inputs[idx],
                                            eye[data.labels[idx]], config.loss)
            if not math.isfinite(value):
                raise TrainingDiverged(step, checkpoints[-1] if checkpoints else None,
                                       checkpoints)
            step += 1
            if config.lr > 0:
                if not all(np.all(np.isfinite(g)) for g in gw + gb):
                    raise TrainingDiverged(step, checkpoints[-1] if checkpoints else None,
                                           checkpoints)
                params, grads = W + B, gw + gb
                if config.optimizer == "sgd":
                    for p, g in zip(params, grads):
                        p -= config.lr * g
                else:
                    c1, c2 = 1 - b1 ** step, 1 - b2 ** step
                    for p, g, mk, vk in zip(params, grads, m, v):
                        mk *= b1
                        mk += (1 - b1) * g
                        vk *= b2
                        vk += (1 - b2) * g * g
                        p -= config.lr * (mk / c1) / (np.sqrt(vk / c2) + ADAM_EPS)
            if step in stops:
                snapshot(step)
    return checkpoints


@dataclass(frozen=True, eq=False)
class Probes:
    """Probe geometry held fixed across checkpoints.

    ``lines`` are ``(point, direction)`` pairs of infinite lines; ``points``
    feed the boundary-distance metric; ``frame`` optionally adds a 2-D count.
    """

    lines: tuple = ()
    points: np.ndarray | None = None
    frame: SliceFrame | None = None


def make_probes(data: Dataset, n_lines: int = 100, n_points: int = 1000, seed: int = 0,
                frame: SliceFrame | None = None) -> Probes:
    """Lines through the origin and random training examples, and random training points."""
    rng = np.random.default_rng(seed)
    li = rng.choice(len(data), size=n_lines, replace=n_lines > len(data))
    pi = rng.choice(len(data), size=n_points, replace=n_points > len(data))
    lines = tuple((np.zeros(data.dim), data.inputs[i].copy()) for i in li)
    return Probes(lines, data.inputs[pi].copy(), frame)


METRIC_COLUMNS = ("epoch_fraction", "regions_per_neuron", "regions_per_neuron_se",
                  "mean_dist_times_neurons", "n_regions_2d", "train_loss", "train_acc",
                  "test_loss", "test_acc")


def _metrics(ck: Checkpoint, probes: Probes) -> dict:
    net = ck.net
    row = {"epoch_fraction": ck.epoch_fraction, "train_loss": ck.train_loss,
           "train_acc": ck.train_acc, "test_loss": ck.test_loss, "test_acc": ck.test_acc,
           "regions_per_neuron": math.nan, "regions_per_neuron_se": math.nan,
           "mean_dist_times_neurons": math.nan, "n_regions_2d": -1}
    if probes.lines:
        r = np.array([p.n_regions for p in count_lines(net, probes.lines)]) / net.n_hidden
        row["regions_per_neuron"] = float(r.mean())
        row["regions_per_neuron_se"] = float(r.std(ddof=1) / math.sqrt(r.size)) if r.size > 1 else 0.0
    if probes.points is not None and len(probes.points):
        d = boundary_distances(net, probes.points)[0]
        d = d[np.isfinite(d)]
        row["mean_dist_times_neurons"] = float(d.mean()) * net.n_hidden if d.size else math.inf
    if probes.frame is not None:
        row["n_regions_2d"] = enumerate_plane(net, probes.frame).n_regions
    return row


def track_complexity(checkpoints: Sequence[Checkpoint], probes: Probes,
                     threads: int = 1) -> list[dict]:
    """One metric row per checkpoint, all computed on the same probes."""
    if threads > 1 and len(checkpoints) > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            return list(ex.map(lambda ck: _metrics(ck, probes), checkpoints))
    return [_metrics(ck, probes) for ck in checkpoints]

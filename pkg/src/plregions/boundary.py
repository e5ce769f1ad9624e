"""Distance from a point to the boundary of its linear region.

For a point in the interior of a region every pre-activation is affine
nearby, so the nearest breakpoint hyperplane of neuron ``z`` lies at
``|pre_z(x) - xi| / |grad z(x)|``.  The minimum over neurons and
breakpoints is the distance to the region's boundary.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .network import (Network, NeuronRef, ON_BOUNDARY_RTOL, forward, good_neurons, patterns,
                      preactivation_jacobians)
from .region1d import count_regions_on_segment

SOURCES = ("gaussian", "dataset-train", "dataset-test", "uniform-cube")


class ConfigurationError(ValueError):
    pass


@dataclass(frozen=True)
class BoundaryDistance:
    distance: float
    neuron: NeuronRef | None
    breakpoint: int
    on_boundary: bool = False


def gradient_norms(net: Network, X: np.ndarray, pres: list[np.ndarray] | None = None
                   ) -> list[np.ndarray]:
    """Input-gradient norms of every hidden neuron, per point.

    Propagates the Gram matrix ``K = J J^T`` of each layer's Jacobian, which
    keeps the cost independent of the input dimension after the first layer.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if pres is None:
        pres = forward(net, X)[1]
    q = net.activation.q
    W0 = net.weights[0]
    K = W0 @ W0.T
    norms = [np.broadcast_to(np.sqrt(np.maximum(np.diag(K), 0.0)), pres[0].shape).copy()]
    K = np.broadcast_to(K, (X.shape[0],) + K.shape)
    for j in range(1, net.depth):
        d = q[net.activation.piece_index(pres[j - 1])]
        DKD = d[:, :, None] * K * d[:, None, :]
        W = net.weights[j]
        K = W @ DKD @ W.T
        norms.append(np.sqrt(np.maximum(np.einsum("nii->ni", K), 0.0)))
    return norms


def _distances_chunk(net: Network, X: np.ndarray, filtered: bool):
    _, pres = forward(net, X)
    if not pres:
        n = X.shape[0]
        return np.full(n, math.inf), np.full(n, -1), np.full(n, -1), np.zeros(n, bool)
    norms = gradient_norms(net, X, pres)
    pre = np.concatenate(pres, axis=1)
    gn = np.concatenate(norms, axis=1)
    xi = net.activation.xi
    gap = np.abs(pre[:, :, None] - xi[None, None, :])             # (N, n_hidden, T)
    on = gap <= ON_BOUNDARY_RTOL * (1.0 + np.abs(pre))[:, :, None]
    with np.errstate(divide="ignore"):
        dist = np.where(gn[:, :, None] > 0, gap / gn[:, :, None], math.inf)
    if filtered:
        q = net.activation.q
        open_mask = [q[net.activation.piece_index(z)] != 0 for z in pres]
        good = np.concatenate(good_neurons(net, open_mask), axis=1)
        dist = np.where(good[:, :, None], dist, math.inf)
        on &= good[:, :, None]
    dist = np.where(on, 0.0, dist)
    flat = dist.reshape(dist.shape[0], -1)
    arg = np.argmin(flat, axis=1)
    best = flat[np.arange(flat.shape[0]), arg]
    T = xi.size
    neuron = np.where(np.isfinite(best), arg // T, -1)
    bp = np.where(np.isfinite(best), arg % T, -1)
    return best, neuron, bp, on.reshape(on.shape[0], -1).any(axis=1)


def boundary_distances(net: Network, X, filtered: bool = False, chunk: int = 512,
                       threads: int = 1):
    """Batch version: ``(distance, flat neuron, breakpoint, on_boundary)`` arrays.

    Dead points (no neuron with a nonzero gradient) get distance ``inf`` and
    neuron ``-1``.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    parts = [X[i:i + chunk] for i in range(0, X.shape[0], chunk)]
    if threads > 1 and len(parts) > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            res = list(ex.map(lambda P: _distances_chunk(net, P, filtered), parts))
    else:
        res = [_distances_chunk(net, P, filtered) for P in parts]
    if not res:
        return np.zeros(0), np.zeros(0, int), np.zeros(0, int), np.zeros(0, bool)
    return tuple(np.concatenate(r) for r in zip(*res))


def distance_to_boundary(net: Network, x, filtered: bool = False) -> BoundaryDistance:
    """Distance from ``x`` to the boundary of its linear region.

    With ``filtered`` only neurons with an open path to the output count,
    which drops hyperplanes across which the network's gradient is continuous.
    """
    x = np.asarray(x, dtype=float).reshape(1, -1)
    d, z, k, on = boundary_distances(net, x, filtered)
    ref = net.neuron(int(z[0])) if z[0] >= 0 else None
    return BoundaryDistance(float(d[0]), ref, int(k[0]), bool(on[0]))


@dataclass(frozen=True)
class SampleSpec:
    source: str
    count: int
    seed: int = 0

    def __post_init__(self):
        if self.source not in SOURCES:
            raise ValueError(f"source must be one of {SOURCES}")
        if self.count < 1:
            raise ValueError("count must be >= 1")


def draw_samples(spec: SampleSpec, n_in: int, dataset=None, test_dataset=None) -> np.ndarray:
    rng = np.random.default_rng(spec.seed)
    if spec.source == "uniform-cube":
        return rng.random((spec.count, n_in))
    if spec.source == "gaussian":
        if dataset is None:
            raise ConfigurationError("moment-matched sampling needs a loaded dataset")
        mean, var = dataset.moments()
        return mean + np.sqrt(var) * rng.standard_normal((spec.count, mean.size))
    data = dataset if spec.source == "dataset-train" else test_dataset
    if data is None:
        raise ConfigurationError(f"source {spec.source!r} needs a loaded dataset")
    idx = rng.choice(data.inputs.shape[0], size=spec.count, replace=spec.count > data.inputs.shape[0])
    return data.inputs[idx]


@dataclass(frozen=True, eq=False)
class DistanceReport:
    distances: np.ndarray
    neurons: np.ndarray           # flat index of the minimizing neuron, -1 if none
    breakpoints: np.ndarray
    n_hidden: int
    hist_counts: np.ndarray       # log10 distance histogram
    hist_edges: np.ndarray
    spec: SampleSpec | None = None

    @property
    def finite(self) -> np.ndarray:
        return self.distances[np.isfinite(self.distances)]

    @property
    def mean(self) -> float:
        return float(np.mean(self.finite)) if self.finite.size else math.inf

    @property
    def mean_times_neurons(self) -> float:
        return self.mean * self.n_hidden

    def quantiles(self, qs=(0.05, 0.25, 0.5, 0.75, 0.95)) -> dict[float, float]:
        f = self.finite
        return {float(q): float(np.quantile(f, q)) for q in qs} if f.size else {}

    def summary(self) -> dict:
        f = self.finite
        return {
            "count": int(self.distances.size),
            "finite": int(f.size),
            "mean": self.mean,
            "mean_times_neurons": self.mean_times_neurons,
            "min": float(f.min()) if f.size else math.inf,
            "max": float(f.max()) if f.size else math.inf,
            "quantiles": {str(k): v for k, v in self.quantiles().items()},
        }


def log_histogram(distances, bins: int = 50):
    d = np.asarray(distances, dtype=float)
    d = d[np.isfinite(d) & (d > 0)]
    if d.size == 0:
        return np.zeros(bins, dtype=np.int64), np.linspace(0.0, 1.0, bins + 1)
    return np.histogram(np.log10(d), bins=bins)


def distance_report(net: Network, X, bins: int = 50, filtered: bool = False,
                    threads: int = 1, spec: SampleSpec | None = None) -> DistanceReport:
    d, z, k, _ = boundary_distances(net, X, filtered, threads=threads)
    counts, edges = log_histogram(d, bins)
    return DistanceReport(d, z, k, net.n_hidden, counts, edges, spec)


def distance_histogram(net: Network, spec: SampleSpec, dataset=None, test_dataset=None,
                       bins: int = 50, filtered: bool = False, threads: int = 1) -> DistanceReport:
    """Distances of sampled points and their log10 histogram."""
    X = draw_samples(spec, net.input_dim, dataset, test_dataset)
    return distance_report(net, X, bins, filtered, threads, spec)


@dataclass(frozen=True)
class ExactnessRecord:
    formula: float
    bisection: float
    directional_min: float
    n_directions: int
    lower_bound_ok: bool          # formula <= every probed first change
    bisection_ok: bool            # formula equals the change along the minimizing normal
    filtered: float               # distance counting only neurons that reach the output
    known_gap: bool               # unfiltered distance stops at a hyperplane with no kink


def first_change(net: Network, x, v, t_max: float) -> float:
    """First pattern change along ``x + t v`` for ``0 < t <= t_max``, or ``inf``."""
    part = count_regions_on_segment(net, x, np.asarray(x) + t_max * np.asarray(v))
    return float(part.ts[0] * t_max) if part.n_crossings else math.inf


def verify_distance_exactness(net: Network, x, n_directions: int = 1000, seed: int = 0,
                              tol: float = 1e-8) -> ExactnessRecord:
    """Check the distance formula against two searches that do not use it.

    (a) bisection for the first pattern change along the minimizing neuron's
    normal; (b) the first change along random directions, found by exact
    segment partition.  Same-pattern sets are convex, so along any ray the
    points sharing ``x``'s pattern form an interval starting at ``x``.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    res = distance_to_boundary(net, x)
    filt = distance_to_boundary(net, x, filtered=True)
    d = res.distance
    scale = 1.0 + float(np.linalg.norm(x))
    if res.neuron is None or not math.isfinite(d):
        return ExactnessRecord(d, math.inf, math.inf, 0, True, True, filt.distance, False)
    P0 = patterns(net, x)[0]
    g = preactivation_jacobians(net, x)[res.neuron.layer - 1][res.neuron.unit]
    pre = forward(net, x)[1][res.neuron.layer - 1][res.neuron.unit]
    n = g / np.linalg.norm(g) * np.sign(net.activation.xi[res.breakpoint] - pre)
    lo, hi = 0.0, 2.0 * d + 1e-12 * scale
    if np.array_equal(patterns(net, x + hi * n)[0], P0):
        b = math.inf
    else:
        while hi - lo > 1e-13 * scale:
            mid = 0.5 * (lo + hi)
            if np.array_equal(patterns(net, x + mid * n)[0], P0):
                lo = mid
            else:
                hi = mid
        b = 0.5 * (lo + hi)
    rng = np.random.default_rng(seed)
    V = rng.standard_normal((n_directions, x.size))
    V /= np.linalg.norm(V, axis=1, keepdims=True)
    t_max = 2.0 * d + 1e-9 * scale
    dmin = min((first_change(net, x, v, t_max) for v in V), default=math.inf)
    return ExactnessRecord(d, b, dmin, n_directions, d <= dmin + tol * scale,
                           abs(d - b) < tol * scale, filt.distance,
                           filt.distance > d * (1 + 1e-9))

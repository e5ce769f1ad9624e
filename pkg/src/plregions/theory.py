"""Monte-Carlo checks of the expected-complexity results at initialization.

Every check returns a :class:`TheoryReport` holding the predicted value or
bound, the estimate, its standard error and the verdict under the recorded
tolerance.  All randomness flows from explicit seeds.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import comb, digamma
from scipy.stats import binom, norm

from .boundary import boundary_distances, gradient_norms
from .netgen import InitSpec, bias_density_stats, he_init, lower_bound_eta, normal_pdf
from .network import Network
from .region1d import count_regions_on_segment, filter_crossings_by_gradient, partition_line
from .region2d import PlaneArena, SliceFrame, enumerate_plane

EULER_GAMMA = 0.5772156649015329
UNSPECIFIED = "up to an unspecified absolute constant (set to 1)"
# second-order constant of the log-gradient expansion; the exact Gaussian
# model gives about 4.1 for wide layers and 5.2 at width 16
LOG_GRAD_SLACK = 6.0


@dataclass
class TheoryReport:
    name: str
    theory: float | None
    estimate: float | None
    se: float | None
    tolerance: float | None
    passed: bool
    kind: str = "equality"        # equality | upper | lower | report
    n_samples: int = 0
    seed: int | None = None
    constant_note: str | None = None
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return _jsonable(asdict(self))

    def line(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        return (f"{verdict} {self.name}: estimate={_fmt(self.estimate)} theory={_fmt(self.theory)}"
                f" se={_fmt(self.se)} tol={_fmt(self.tolerance)}")


def _fmt(v) -> str:
    return "-" if v is None else f"{v:.6g}"


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if math.isfinite(f) else str(f)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _se(x) -> float:
    x = np.asarray(x, dtype=float)
    return float(np.std(x, ddof=1) / math.sqrt(x.size)) if x.size > 1 else 0.0


# ---------------------------------------------------------------- k = 1 formula

def _hidden_sds(net: Network, bias_sd) -> np.ndarray:
    sd = np.atleast_1d(np.asarray(bias_sd, dtype=float))
    return np.full(net.depth, sd[0]) if sd.size == 1 else sd[:net.depth]


def _draw_biases(net: Network, bias_sd, n: int, rng) -> list[np.ndarray]:
    sds = _hidden_sds(net, bias_sd)
    bs = [rng.normal(0.0, sds[j], size=(n, w.shape[0])) for j, w in enumerate(net.weights[:-1])]
    bs.append(np.zeros((n, net.weights[-1].shape[0])))
    return bs


def _batched_forward(net: Network, X: np.ndarray, v: np.ndarray, biases: list[np.ndarray]):
    """Pre-activations, bias-free parts and directional derivatives.

    ``X`` has shape ``(D, S, n_in)``; ``biases[j]`` has shape ``(D, n_j)``.
    """
    act = net.activation
    a, da = X, np.broadcast_to(v, X.shape)
    pres, free, dpre = [], [], []
    for j in range(net.depth):
        w = net.weights[j]
        u = a @ w.T
        z = u + biases[j][:, None, :]
        dz = da @ w.T
        pres.append(z)
        free.append(u)
        dpre.append(dz)
        k = act.piece_index(z)
        a = act.q[k] * z + act.p[k]
        da = act.q[k] * dz
    return pres, free, dpre


def expected_crossings_k1(net: Network, bias_sd, p0, p1, n_bias_draws: int = 10_000,
                          n_x_samples: int = 16, seed: int = 0) -> TheoryReport:
    """Mean number of boundary crossings of a segment versus the co-area formula.

    Weights are those of ``net``; hidden biases are redrawn i.i.d.
    ``N(0, bias_sd**2)`` for every draw.  The left side counts crossings where
    the output gradient jumps.  The right side integrates, along the segment,
    ``sum_z sum_i |d pre_z / ds| * rho(xi_i - (pre_z - b_z)) * 1{z good}``,
    where goodness is evaluated with ``z`` sitting on its breakpoint.
    """
    p0 = np.asarray(p0, dtype=float).reshape(-1)
    p1 = np.asarray(p1, dtype=float).reshape(-1)
    length = float(np.linalg.norm(p1 - p0))
    if length == 0:
        raise ValueError("segment has zero length")
    v = (p1 - p0) / length
    rng = np.random.default_rng(seed)
    biases = _draw_biases(net, bias_sd, n_bias_draws, rng)
    lhs = np.empty(n_bias_draws)
    for d in range(n_bias_draws):
        nd = net.with_params(biases=[b[d] for b in biases])
        part = filter_crossings_by_gradient(count_regions_on_segment(nd, p0, p1))
        lhs[d] = part.n_crossings
    s = rng.random((n_bias_draws, n_x_samples))
    X = p0 + s[..., None] * (p1 - p0)
    rhs = _k1_integrand(net, X, v, biases, _hidden_sds(net, bias_sd)).mean(axis=1) * length
    se_l, se_r = _se(lhs), _se(rhs)
    combined = math.hypot(se_l, se_r)
    diff = float(lhs.mean() - rhs.mean())
    return TheoryReport(
        "expected_crossings_k1", float(rhs.mean()), float(lhs.mean()), combined, 3 * combined,
        abs(diff) <= 3 * combined, "equality", n_bias_draws, seed,
        details={"lhs_mean": float(lhs.mean()), "rhs_mean": float(rhs.mean()), "se_lhs": se_l,
                 "se_rhs": se_r, "se_paired": _se(lhs - rhs), "difference": diff,
                 "segment_length": length, "n_x_samples": n_x_samples})


def _k1_integrand(net: Network, X, v, biases, sds) -> np.ndarray:
    """Per-sample sum over neurons and breakpoints of the co-area integrand."""
    act = net.activation
    pres, free, dpre = _batched_forward(net, X, v, biases)
    total = np.zeros(X.shape[:2])
    for j in range(net.depth):
        for u in range(net.weights[j].shape[0]):
            for xi in act.xi:
                dens = normal_pdf(xi - free[j][..., u], sds[j])
                good = _good_downstream(net, pres, biases, j, u, xi)
                total += np.abs(dpre[j][..., u]) * dens * good
    return total


def _good_downstream(net: Network, pres, biases, layer: int, unit: int, level: float):
    act = net.activation
    L = net.depth
    opened = [act.q[act.piece_index(z)] != 0 for z in pres]
    if layer + 1 < L:
        z = pres[layer].copy()
        z[..., unit] = level
        a = act(z)
        for j in range(layer + 1, L):
            zz = a @ net.weights[j].T + biases[j][:, None, :]
            opened[j] = act.q[act.piece_index(zz)] != 0
            a = act(zz)
    reach = (net.weights[-1] != 0).any(axis=0)
    good = np.broadcast_to(reach, opened[L - 1].shape)
    for j in range(L - 2, layer - 1, -1):
        nxt = (opened[j + 1] & good).astype(float)
        good = (nxt @ (net.weights[j + 1] != 0).astype(float)) > 0
    return good[..., unit]


def single_neuron_crossing_probability(w, p0, p1, bias_sd: float) -> float:
    """Probability that ``w . x + b`` changes sign on the segment, ``b ~ N(0, sd^2)``."""
    u0, u1 = sorted((float(np.dot(w, p0)), float(np.dot(w, p1))))
    return float(norm.cdf(u1 / bias_sd) - norm.cdf(u0 / bias_sd))


# ---------------------------------------------------------------- bounds

def box_points(center, half: float, n_in: int, n: int, rng=None, grid: bool = True) -> np.ndarray:
    """Grid (2-D) or random points in the cube ``center + [-half, half]^n_in``."""
    center = np.broadcast_to(np.asarray(center, dtype=float), (n_in,))
    if grid and n_in == 2:
        g = np.linspace(-half, half, n)
        U, V = np.meshgrid(g, g)
        return center + np.stack([U.ravel(), V.ravel()], axis=1)
    rng = rng or np.random.default_rng(0)
    return center + rng.uniform(-half, half, size=(n, n_in))


def estimate_C_grad(spec: InitSpec, X: np.ndarray, k: int, n_seeds: int, seed: int = 0):
    """Monte-Carlo ``sup_{neurons, x} E[prod_j |grad z_j(x)|]^{1/k}`` and its SE.

    For ``k = 2`` the supremum runs over pairs of distinct neurons.
    """
    norms = []
    for s in range(n_seeds):
        net = he_init(spec.with_seed(seed + s))
        norms.append(np.concatenate(gradient_norms(net, X), axis=1))   # (P, N)
    G = np.stack(norms)                                                # (seeds, P, N)
    if k == 1:
        m = G.mean(axis=0)
        i = np.unravel_index(np.argmax(m), m.shape)
        return float(m[i]), _se(G[(slice(None),) + i])
    N = G.shape[2]
    best, best_se = -1.0, 0.0
    for p in range(G.shape[1]):
        M = np.einsum("sa,sb->ab", G[:, p], G[:, p]) / n_seeds
        np.fill_diagonal(M, -np.inf)
        a, b = np.unravel_index(np.argmax(M), M.shape)
        if M[a, b] > best:
            best, best_se = float(M[a, b]), _se(G[:, p, a] * G[:, p, b])
    return math.sqrt(best), best_se / (2 * math.sqrt(best)) if best > 0 else 0.0


def boundary_edge_mask(arena: PlaneArena, rtol: float = 1e-8) -> np.ndarray:
    """Interior edges across which the output's gradient actually jumps."""
    inner = arena.interior_edges & (arena.edge_polys >= 0).all(axis=1)
    mask = np.zeros(len(arena.edges), dtype=bool)
    e = np.flatnonzero(inner)
    A = arena.out_A
    a, b = A[arena.edge_polys[e, 0]], A[arena.edge_polys[e, 1]]
    jump = np.linalg.norm((a - b).reshape(len(e), -1), axis=1)
    ref = np.maximum(np.linalg.norm(a.reshape(len(e), -1), axis=1),
                     np.linalg.norm(b.reshape(len(e), -1), axis=1))
    mask[e] = jump > rtol * np.maximum(ref, 1e-300)
    return mask


def boundary_vertex_count(arena: PlaneArena, edge_mask: np.ndarray) -> int:
    """Interior vertices met by gradient-jump edges of two different neurons."""
    e = np.flatnonzero(edge_mask)
    verts = arena.edges[e].ravel()
    labels = np.repeat(arena.edge_label[e, 0], 2)
    inner = arena.interior_vertices
    keep = inner[verts]
    pairs = np.unique(np.stack([verts[keep], labels[keep]], axis=1), axis=0)
    v, cnt = np.unique(pairs[:, 0], return_counts=True)
    return int(np.sum(cnt >= 2))


def boundary_density(net: Network, center, half: float, k: int, rtol: float = 1e-8) -> float:
    """Exact ``vol_{2-k}(B_{N,k} cap K) / vol_2(K)`` for a 2-input network on a square."""
    if net.input_dim != 2:
        raise ValueError("exact boundary densities need a 2-input network")
    frame = SliceFrame(np.asarray(center, dtype=float), np.eye(2), 2 * half)
    arena = enumerate_plane(net, frame)
    mask = boundary_edge_mask(arena, rtol)
    if k == 1:
        return float(arena.edge_lengths()[mask].sum() / frame.side ** 2)
    return boundary_vertex_count(arena, mask) / frame.side ** 2


def corollary_bounds(spec: InitSpec, k: int, center=(0.0, 0.0), half: float = 1.0,
                     n_seeds: int = 20, n_grad_seeds: int = 500, grid: int = 5,
                     C_prime: float = 1.0, seed: int = 0) -> TheoryReport:
    """Upper and lower bounds on the boundary density versus exact per-seed densities.

    The upper bound is ``binom(N, k) (T 2 C_grad C_bias)^k`` and the lower one
    ``binom(N, k) c_bias^k`` with the window half-width ``eta`` evaluated at
    ``C_prime``.  Empirical densities come from exact planar enumeration,
    which requires a 2-input network and the square ``center + [-half, half]^2``.
    """
    if k not in (1, 2):
        raise ValueError("k must be 1 or 2")
    n_in = spec.layer_sizes[0]
    if n_in != 2:
        raise ValueError("corollary_bounds measures exact densities and needs n_in = 2")
    T = spec.activation.T
    N = sum(spec.widths)
    sds = spec.bias_sds[:-1]
    center = np.asarray(center, dtype=float)
    X = box_points(center, half, n_in, grid)
    C_grad, C_grad_se = estimate_C_grad(spec, X, k, n_grad_seeds, seed + 10_000)
    corners = center + half * np.array([[1, 1], [1, -1], [-1, 1], [-1, -1]])
    sup_sq = float(np.max(np.sum(corners ** 2, axis=1)))
    eta = lower_bound_eta(sup_sq, n_in, sds, spec.widths, C_prime)
    dens = bias_density_stats(sds, eta)
    upper = float(comb(N, k) * (T * 2 * C_grad * dens.C_bias) ** k)
    lower = float(comb(N, k) * dens.c_bias ** k)
    emp = np.array([boundary_density(he_init(spec.with_seed(seed + s)), center, half, k)
                    for s in range(n_seeds)])
    n_up = int(np.sum(emp <= upper))
    n_lo = int(np.sum(emp >= lower))
    return TheoryReport(
        f"corollary_bounds_k{k}", upper, float(emp.mean()), _se(emp), None, n_up == n_seeds,
        "upper", n_seeds, seed, UNSPECIFIED,
        details={"upper": upper, "lower": lower, "per_seed": emp, "n_below_upper": n_up,
                 "n_above_lower": n_lo, "C_grad": C_grad, "C_grad_se": C_grad_se,
                 "C_bias": dens.C_bias, "c_bias": dens.c_bias, "eta": eta, "T": T,
                 "neurons": N, "C_prime": C_prime, "square_half_side": half})


def distance_lower_bound(spec: InitSpec, center, half: float, n_seeds: int = 5,
                         n_samples: int = 2000, n_grad_seeds: int = 200, c: float = 1.0,
                         seed: int = 0) -> TheoryReport:
    """``c T / (C_bias C_grad N)`` against the mean distance of uniform points in the cube."""
    n_in = spec.layer_sizes[0]
    T = spec.activation.T
    N = sum(spec.widths)
    rng = np.random.default_rng(seed)
    Xg = box_points(center, half, n_in, 5 if n_in == 2 else 25, rng)
    C_grad, _ = estimate_C_grad(spec, Xg, 1, n_grad_seeds, seed + 10_000)
    C_bias = bias_density_stats(spec.bias_sds[:-1], 0.0).C_bias
    bound = c * T / (C_bias * C_grad * N)
    means = []
    for s in range(n_seeds):
        net = he_init(spec.with_seed(seed + s))
        X = box_points(center, half, n_in, n_samples, np.random.default_rng(seed + 7 * s + 1),
                       grid=False)
        d = boundary_distances(net, X)[0]
        means.append(float(np.mean(d[np.isfinite(d)])))
    means = np.array(means)
    return TheoryReport(
        "distance_lower_bound", bound, float(means.mean()), _se(means), None,
        bool(means.mean() >= bound), "lower", n_seeds * n_samples, seed, UNSPECIFIED,
        details={"per_seed": means, "C_grad": C_grad, "C_bias": C_bias, "T": T, "neurons": N,
                 "normalized": float(means.mean() * N * C_bias * C_grad), "c": c})


# ---------------------------------------------------------------- moment identities

def _jacobians(net: Network, x) -> tuple[list[np.ndarray], list[np.ndarray]]:
    act = net.activation
    a = np.asarray(x, dtype=float)
    J = np.eye(a.size)
    pres, jacs = [], []
    for j in range(net.depth):
        w, b = net.weights[j], net.biases[j]
        z = w @ a + b
        J = w @ J
        pres.append(z)
        jacs.append(J)
        k = act.piece_index(z)
        a = act.q[k] * z + act.p[k]
        J = act.q[k][:, None] * J
    return pres, jacs


def gradient_moment_check(spec: InitSpec, x, n_seeds: int = 2000, rtol: float = 0.05,
                          seed: int = 0) -> TheoryReport:
    """``E |grad z(x)|^2 = 2`` for every neuron at every depth."""
    per = []
    for s in range(n_seeds):
        _, jacs = _jacobians(he_init(spec.with_seed(seed + s)), x)
        per.append([float(np.mean(np.sum(J ** 2, axis=1))) for J in jacs])
    per = np.array(per)
    means = per.mean(axis=0)
    ses = np.array([_se(per[:, j]) for j in range(per.shape[1])])
    err = np.abs(means - 2.0) / 2.0
    worst = int(np.argmax(err))
    return TheoryReport(
        "gradient_moment", 2.0, float(means[worst]), float(ses[worst]), rtol,
        bool(np.all(err <= rtol)), "equality", n_seeds, seed,
        details={"per_layer_mean": means, "per_layer_se": ses, "relative_error": err})


def preactivation_moment_check(spec: InitSpec, x, n_seeds: int = 2000, rtol: float = 0.05,
                               seed: int = 0) -> TheoryReport:
    """Second moment of pre-activations per layer.

    The gate uses ``|x|^2 / n_in + sum_{j<=l} sigma_j^2``.  Exact propagation
    for symmetric weights gives ``|x|^2 / n_in + (1/2) sum_{j<=l} sigma_j^2``,
    which is reported alongside and coincides when the biases are small.
    """
    x = np.asarray(x, dtype=float)
    per = []
    for s in range(n_seeds):
        pres, _ = _jacobians(he_init(spec.with_seed(seed + s)), x)
        per.append([0.5 * float(np.mean(z ** 2)) for z in pres])
    per = np.array(per)
    means = per.mean(axis=0)
    ses = np.array([_se(per[:, j]) for j in range(per.shape[1])])
    cum = np.cumsum(spec.bias_sds[:-1] ** 2)
    base = float(x @ x) / x.size
    stated = base + cum
    exact = base + 0.5 * cum
    with np.errstate(divide="ignore", invalid="ignore"):
        err = np.where(stated > 0, np.abs(means - stated) / stated, np.abs(means))
    return TheoryReport(
        "preactivation_moment", float(stated[-1]), float(means[-1]), float(ses[-1]), rtol,
        bool(np.all(err <= rtol)), "equality", n_seeds, seed,
        details={"per_layer_mean": means, "per_layer_se": ses, "stated": stated,
                 "exact": exact, "relative_error": err})


def open_path_probability(spec: InitSpec, x, n_seeds: int = 2000, seed: int = 0) -> TheoryReport:
    """Gate frequencies and the chance that every hidden layer has an open neuron."""
    opens, all_layers = [], []
    for s in range(n_seeds):
        pres, _ = _jacobians(he_init(spec.with_seed(seed + s)), x)
        o = [z > 0 for z in pres]
        opens.append(np.mean(np.concatenate(o)))
        all_layers.append(all(layer.any() for layer in o))
    opens = np.array(opens)
    all_layers = np.array(all_layers, dtype=float)
    bound = 1.0 - float(np.sum(2.0 ** -np.asarray(spec.widths, dtype=float)))
    p, se = float(all_layers.mean()), _se(all_layers)
    freq, fse = float(opens.mean()), _se(opens)
    passed = p >= bound - 3 * se and abs(freq - 0.5) <= 3 * max(fse, 1e-12)
    return TheoryReport(
        "open_path_probability", bound, p, se, 3 * se, bool(passed), "lower", n_seeds, seed,
        details={"open_frequency": freq, "open_frequency_se": fse,
                 "independent_gates": float(np.prod(1 - 0.5 ** np.asarray(spec.widths)))})


def log_gradient_prediction(widths, layer: int) -> dict:
    """Predicted ``E log(n_in (d pre / d x_j)^2)`` for a neuron of hidden layer ``layer``.

    Gates are independent fair coins, so the squared derivative is
    ``2 chi2_1 / n_in * prod_{m<l} (2 / n_m) chi2_{K_m}`` with
    ``K_m ~ Bin(n_m, 1/2)`` open neurons.  The first factor contributes
    ``-gamma``; each earlier layer adds ``log(4 / n_m) + E psi(K_m / 2)``,
    whose expansion is ``-(5/2) / n_m + O(1 / n_m^2)``.  Layers with no open
    neuron (probability ``2^-n_m``) are conditioned away.
    """
    before = np.asarray(widths[:layer - 1], dtype=float)
    exact = -EULER_GAMMA
    for n in before.astype(int):
        K = np.arange(1, n + 1)
        pmf = binom.pmf(K, n, 0.5)
        exact += math.log(4.0 / n) + float(np.sum(pmf * digamma(K / 2.0)) / pmf.sum())
    leading = -EULER_GAMMA - 2.5 * float(np.sum(1.0 / before))
    return {"exact": exact, "leading": leading, "stated": -2.5 * float(np.sum(1.0 / before)),
            "slack": LOG_GRAD_SLACK * float(np.sum(1.0 / before ** 2)), "offset": -EULER_GAMMA}


def log_gradient_check(spec: InitSpec, x, n_seeds: int = 2000, coordinate: int = 0,
                       seed: int = 0) -> TheoryReport:
    """Mean of ``log(n_in (d pre_z / d x_j)^2)`` per layer against its expansion.

    Gate per layer: ``|MC - leading| <= 6 sum 1/n_m^2 + 3 SE``, the standard
    error taken over per-network layer means.
    """
    x = np.asarray(x, dtype=float)
    n_in = x.size
    per, dropped = [], 0
    for s in range(n_seeds):
        _, jacs = _jacobians(he_init(spec.with_seed(seed + s)), x)
        g = [J[:, coordinate] for J in jacs]
        if any(np.all(gl == 0) for gl in g):
            dropped += 1
            continue
        row = []
        for gl in g:
            nz = gl[gl != 0]
            row.append(float(np.mean(np.log(n_in * nz ** 2))))
        per.append(row)
    per = np.array(per)
    means = per.mean(axis=0)
    ses = np.array([_se(per[:, j]) for j in range(per.shape[1])])
    preds = [log_gradient_prediction(spec.widths, layer) for layer in range(1, len(means) + 1)]
    leading = np.array([p["leading"] for p in preds])
    exact = np.array([p["exact"] for p in preds])
    slack = np.array([p["slack"] for p in preds])
    ok = np.abs(means - leading) <= slack + 3 * ses
    return TheoryReport(
        "log_gradient", float(leading[-1]), float(means[-1]), float(ses[-1]),
        float(slack[-1] + 3 * ses[-1]), bool(np.all(ok)), "equality", len(per), seed,
        details={"per_layer_mean": means, "per_layer_se": ses, "leading": leading,
                 "exact": exact, "stated": [p["stated"] for p in preds], "slack": slack,
                 "offset_corrected_mean": means + EULER_GAMMA, "dropped_dead": dropped,
                 "coordinate": coordinate})


def jacobian_volume(J) -> float:
    """``det(J J^T)^{1/2}`` for a ``k x n`` Jacobian."""
    J = np.atleast_2d(np.asarray(J, dtype=float))
    return float(math.sqrt(max(np.linalg.det(J @ J.T), 0.0)))


# ---------------------------------------------------------------- tube bound

def tube_geometry(arena: PlaneArena) -> tuple[np.ndarray, float, int]:
    """Interior segments, their total length, and the count of 0-dimensional pieces.

    The set is the union of closed interior edges; its 0-dimensional pieces
    are all their endpoints, which includes points on the square's frame.
    """
    e = arena.interior_edges
    segs = arena.vertices[arena.edges[e]]              # (E, 2, 2)
    L = float(np.hypot(*(segs[:, 1] - segs[:, 0]).T).sum()) if len(segs) else 0.0
    V = int(np.unique(arena.edges[e]).size)
    return segs, L, V


def _bucket(segs: np.ndarray, x0: float, y0: float, cs: float, nx: int, ny: int, eps: float):
    lo = np.minimum(segs[:, 0], segs[:, 1]) - eps
    hi = np.maximum(segs[:, 0], segs[:, 1]) + eps
    ix0 = np.clip(np.floor((lo[:, 0] - x0) / cs).astype(np.int64), 0, nx - 1)
    ix1 = np.clip(np.floor((hi[:, 0] - x0) / cs).astype(np.int64), 0, nx - 1)
    iy0 = np.clip(np.floor((lo[:, 1] - y0) / cs).astype(np.int64), 0, ny - 1)
    iy1 = np.clip(np.floor((hi[:, 1] - y0) / cs).astype(np.int64), 0, ny - 1)
    wx, wy = ix1 - ix0 + 1, iy1 - iy0 + 1
    cnt = wx * wy
    seg = np.repeat(np.arange(len(segs)), cnt)
    start = np.repeat(np.cumsum(cnt) - cnt, cnt)
    r = np.arange(cnt.sum()) - start
    cx = ix0[seg] + r % wx[seg]
    cy = iy0[seg] + r // wx[seg]
    cell = cy * nx + cx
    order = np.argsort(cell, kind="stable")
    ptr = np.zeros(nx * ny + 1, dtype=np.int64)
    np.cumsum(np.bincount(cell, minlength=nx * ny), out=ptr[1:])
    return ptr, seg[order].astype(np.int64)


def tube_area(arena: PlaneArena, eps: float, n_mc: int, seed: int = 0, impl=None):
    """Monte-Carlo area of the ``eps``-tube of the interior edges inside the square."""
    from . import kernels
    segs, _, _ = tube_geometry(arena)
    h = arena.frame.half
    side = arena.side
    rng = np.random.default_rng(seed)
    P = rng.uniform(-h, h, size=(n_mc, 2))
    if len(segs) == 0:
        return 0.0, 0.0
    n_cells = int(min(256, max(1, math.floor(side / max(eps, 1e-300)))))
    cs = side / n_cells
    ptr, cseg = _bucket(segs, -h, -h, cs, n_cells, n_cells, eps)
    hits = kernels.tube_hits(P[:, 0], P[:, 1], segs[:, 0, 0], segs[:, 0, 1], segs[:, 1, 0],
                             segs[:, 1, 1], ptr, cseg, -h, -h, cs, n_cells, n_cells, eps, impl)
    p = float(hits.mean())
    return side ** 2 * p, side ** 2 * math.sqrt(p * (1 - p) / n_mc)


def tube_volume_check(arena: PlaneArena, eps_list, n_mc: int = 100_000,
                      seed: int = 0) -> TheoryReport:
    """Tube area against ``2 eps L + pi eps^2 V`` for each ``eps``."""
    _, L, V = tube_geometry(arena)
    rows = []
    ok = True
    for i, eps in enumerate(eps_list):
        if not eps > 0:
            raise ValueError("eps must be positive")
        area, se = tube_area(arena, eps, n_mc, seed + i)
        bound = 2 * eps * L + math.pi * eps ** 2 * V
        good = area <= bound + 3 * se
        ok &= good
        rows.append({"eps": eps, "area": area, "se": se, "bound": bound, "holds": good})
    worst = max(rows, key=lambda r: r["area"] - r["bound"])
    return TheoryReport("tube_volume", worst["bound"], worst["area"], worst["se"],
                        3 * worst["se"], bool(ok), "upper", n_mc * len(rows), seed,
                        details={"rows": rows, "edge_length": L, "zero_dim_pieces": V})


# ---------------------------------------------------------------- Crofton

def random_chords(half: float, n: int, rng) -> list[tuple[np.ndarray, np.ndarray]]:
    """Isotropic uniform random lines hitting the square ``[-half, half]^2``, clipped to it."""
    R = half * math.sqrt(2)
    out = []
    while len(out) < n:
        th = rng.uniform(0, math.pi)
        r = rng.uniform(-R, R)
        nvec = np.array([math.cos(th), math.sin(th)])
        d = np.array([-nvec[1], nvec[0]])
        base = r * nvec
        lo, hi = -math.inf, math.inf
        for k in range(2):
            if abs(d[k]) < 1e-15:
                if abs(base[k]) > half:
                    lo, hi = 1.0, 0.0
                continue
            a, b = (-half - base[k]) / d[k], (half - base[k]) / d[k]
            lo, hi = max(lo, min(a, b)), min(hi, max(a, b))
        if hi - lo > 1e-9 * half:
            out.append((base + lo * d, base + hi * d))
    return out


def crofton_check(net: Network, arena: PlaneArena, n_lines: int = 200, seed: int = 0,
                  band=(0.5, 1.5)) -> TheoryReport:
    """Crossings per unit length on random chords versus ``(2/pi)`` times edge length per area.

    For isotropic uniform lines the two agree in expectation; chords are
    counted with the 1-D enumerator on the embedded segments.
    """
    rng = np.random.default_rng(seed)
    frame = arena.frame
    chords = random_chords(frame.half, n_lines, rng)
    crossings, length = 0, 0.0
    for a, b in chords:
        part = count_regions_on_segment(net, frame.embed(a), frame.embed(b))
        crossings += part.n_crossings
        length += float(np.linalg.norm(b - a))
    line_density = crossings / length
    edge_density = float(arena.edge_lengths()[arena.interior_edges].sum()) / frame.side ** 2
    predicted = 2.0 / math.pi * edge_density
    ratio = line_density / predicted if predicted > 0 else math.nan
    return TheoryReport("crofton", predicted, line_density, None, None,
                        bool(band[0] <= ratio <= band[1]), "equality", n_lines, seed,
                        details={"ratio": ratio, "edge_density": edge_density,
                                 "edge_density_per_neuron": edge_density / max(net.n_hidden, 1),
                                 "crossings": crossings, "chord_length": length})


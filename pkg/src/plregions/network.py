"""Exact evaluation of fully connected piecewise-linear networks.

Convention: the bias is folded into the pre-activation, ``pre = W @ a + b``,
and a neuron's post-activation is ``phi(pre)``.  Breakpoints of ``phi`` act as
thresholds on ``pre``.  Everything here is float64 and side-effect free.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

ON_BOUNDARY_RTOL = 1e-12


class ShapeError(ValueError):
    """Input or parameter array has the wrong shape."""


@dataclass(frozen=True)
class NeuronRef:
    """A hidden neuron: ``layer`` is 1-based over hidden layers, ``unit`` 0-based."""

    layer: int
    unit: int

    def __str__(self) -> str:
        return f"z[{self.layer},{self.unit}]"


class OnBoundaryError(ValueError):
    """Raised when a pre-activation sits on a breakpoint of the activation."""

    def __init__(self, neurons: Sequence[NeuronRef], breakpoints: Sequence[int] = ()):
        self.neurons = list(neurons)
        self.breakpoints = list(breakpoints)
        names = ", ".join(str(z) for z in self.neurons[:8])
        more = "" if len(self.neurons) <= 8 else f" (+{len(self.neurons) - 8} more)"
        super().__init__(f"point lies on a region boundary: {names}{more}")


@dataclass(frozen=True, eq=False)
class PiecewiseLinearActivation:
    """Continuous piecewise-linear scalar function.

    Piece ``j`` covers ``(xi_j, xi_{j+1})`` with ``xi_0 = -inf`` and
    ``xi_{T+1} = +inf`` and computes ``slopes[j] * t + intercepts[j]``.
    """

    breakpoints: tuple[float, ...]
    slopes: tuple[float, ...]
    intercepts: tuple[float, ...]
    name: str = "custom"

    def __post_init__(self):
        xi = np.asarray(self.breakpoints, dtype=float)
        q = np.asarray(self.slopes, dtype=float)
        p = np.asarray(self.intercepts, dtype=float)
        T = xi.size
        if T < 1:
            raise ValueError("activation needs at least one breakpoint")
        if q.size != T + 1 or p.size != T + 1:
            raise ValueError(f"need {T + 1} slopes and intercepts for {T} breakpoints")
        if not np.all(np.isfinite(np.concatenate([xi, q, p]))):
            raise ValueError("activation parameters must be finite")
        if np.any(np.diff(xi) <= 0):
            raise ValueError("breakpoints must be strictly increasing")
        if np.any(q[:-1] == q[1:]):
            raise ValueError("adjacent slopes must differ")
        left = q[:-1] * xi + p[:-1]
        right = q[1:] * xi + p[1:]
        scale = np.maximum(1.0, np.maximum(np.abs(left), np.abs(right)))
        if np.any(np.abs(left - right) > 1e-12 * scale):
            raise ValueError("activation is not continuous at its breakpoints")
        object.__setattr__(self, "breakpoints", tuple(float(v) for v in xi))
        object.__setattr__(self, "slopes", tuple(float(v) for v in q))
        object.__setattr__(self, "intercepts", tuple(float(v) for v in p))

    @property
    def T(self) -> int:
        return len(self.breakpoints)

    @property
    def xi(self) -> np.ndarray:
        return np.asarray(self.breakpoints)

    @property
    def q(self) -> np.ndarray:
        return np.asarray(self.slopes)

    @property
    def p(self) -> np.ndarray:
        return np.asarray(self.intercepts)

    @property
    def has_zero_slope(self) -> bool:
        return any(s == 0.0 for s in self.slopes)

    def piece_index(self, t):
        """Piece containing ``t``; a value exactly on ``xi_i`` goes right (piece ``i``)."""
        return np.searchsorted(self.xi, t, side="right")

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        k = self.piece_index(t)
        return self.q[k] * t + self.p[k]

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "breakpoints": list(self.breakpoints),
            "slopes": list(self.slopes),
            "intercepts": list(self.intercepts),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PiecewiseLinearActivation":
        return cls(tuple(d["breakpoints"]), tuple(d["slopes"]), tuple(d["intercepts"]),
                   d.get("name", "custom"))

    def __eq__(self, other):
        if not isinstance(other, PiecewiseLinearActivation):
            return NotImplemented
        return (self.breakpoints, self.slopes, self.intercepts) == (
            other.breakpoints, other.slopes, other.intercepts)

    def __hash__(self):
        return hash((self.breakpoints, self.slopes, self.intercepts))


def relu() -> PiecewiseLinearActivation:
    return PiecewiseLinearActivation((0.0,), (0.0, 1.0), (0.0, 0.0), "relu")


def hard_tanh() -> PiecewiseLinearActivation:
    return PiecewiseLinearActivation((-1.0, 1.0), (0.0, 1.0, 0.0), (-1.0, 0.0, 1.0), "hard_tanh")


def leaky_relu(alpha: float = 0.01) -> PiecewiseLinearActivation:
    return PiecewiseLinearActivation((0.0,), (alpha, 1.0), (0.0, 0.0), "leaky_relu")


ACTIVATIONS = {"relu": relu, "hard_tanh": hard_tanh, "leaky_relu": leaky_relu}


@dataclass(frozen=True, eq=False)
class Network:
    """Dense feed-forward network; the last layer is affine (no activation).

    ``weights[j]`` has shape ``(n_{j+1}, n_j)`` and ``biases[j]`` shape
    ``(n_{j+1},)``.  Arrays are copied and made read-only on construction.
    """

    weights: tuple
    biases: tuple
    activation: PiecewiseLinearActivation = field(default_factory=relu)
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.weights) == 0 or len(self.weights) != len(self.biases):
            raise ShapeError("need one bias vector per weight matrix and at least one layer")
        ws, bs = [], []
        for j, (w, b) in enumerate(zip(self.weights, self.biases)):
            w = np.array(w, dtype=float, copy=True)
            b = np.array(b, dtype=float, copy=True).reshape(-1)
            if w.ndim != 2:
                raise ShapeError(f"layer {j + 1}: weight matrix must be 2-D, got shape {w.shape}")
            if b.shape[0] != w.shape[0]:
                raise ShapeError(f"layer {j + 1}: bias length {b.shape[0]} != {w.shape[0]} rows")
            if ws and w.shape[1] != ws[-1].shape[0]:
                raise ShapeError(
                    f"layer {j + 1}: expects {w.shape[1]} inputs but layer {j} has width "
                    f"{ws[-1].shape[0]}")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ValueError(f"layer {j + 1}: non-finite parameters")
            w.setflags(write=False)
            b.setflags(write=False)
            ws.append(w)
            bs.append(b)
        object.__setattr__(self, "weights", tuple(ws))
        object.__setattr__(self, "biases", tuple(bs))
        object.__setattr__(self, "metadata", dict(self.metadata))

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[1]

    @property
    def output_dim(self) -> int:
        return self.weights[-1].shape[0]

    @property
    def widths(self) -> tuple[int, ...]:
        """Hidden layer widths."""
        return tuple(w.shape[0] for w in self.weights[:-1])

    @property
    def layer_sizes(self) -> tuple[int, ...]:
        return (self.input_dim,) + self.widths + (self.output_dim,)

    @property
    def depth(self) -> int:
        """Number of hidden layers."""
        return len(self.weights) - 1

    @property
    def n_hidden(self) -> int:
        """Neurons carrying the activation (the ones that create breakpoints)."""
        return int(sum(self.widths))

    @property
    def n_neurons(self) -> int:
        """All neurons, output units included."""
        return self.n_hidden + self.output_dim

    @property
    def offsets(self) -> np.ndarray:
        """Start of each hidden layer in the flat neuron index; length depth+1."""
        return np.concatenate([[0], np.cumsum(self.widths)]).astype(int)

    def neuron(self, flat: int) -> NeuronRef:
        off = self.offsets
        layer = int(np.searchsorted(off, flat, side="right"))
        if not 0 <= flat < off[-1]:
            raise IndexError(f"neuron index {flat} out of range")
        return NeuronRef(layer, int(flat - off[layer - 1]))

    def flat_index(self, z: NeuronRef) -> int:
        if not (1 <= z.layer <= self.depth and 0 <= z.unit < self.widths[z.layer - 1]):
            raise IndexError(f"{z} outside architecture {self.layer_sizes}")
        return int(self.offsets[z.layer - 1] + z.unit)

    def with_params(self, weights=None, biases=None, **meta) -> "Network":
        md = dict(self.metadata)
        md.update(meta)
        return Network(self.weights if weights is None else tuple(weights),
                       self.biases if biases is None else tuple(biases),
                       self.activation, md)

    def truncated(self, depth: int) -> "Network":
        """Network whose outputs are the pre-activations of hidden layer ``depth``."""
        if not 1 <= depth <= self.depth:
            raise ValueError(f"depth must be in [1, {self.depth}]")
        return Network(self.weights[:depth], self.biases[:depth], self.activation,
                       dict(self.metadata))

    def __call__(self, x):
        return forward(self, x)[0]


@dataclass(frozen=True)
class ActivationPattern:
    """Piece index of every hidden neuron, flattened layer by layer."""

    pieces: np.ndarray
    widths: tuple[int, ...]

    def __post_init__(self):
        p = np.asarray(self.pieces, dtype=np.int8)
        if p.shape != (sum(self.widths),):
            raise ShapeError("pattern length must equal the hidden neuron count")
        object.__setattr__(self, "pieces", p)

    def layer(self, j: int) -> np.ndarray:
        off = np.concatenate([[0], np.cumsum(self.widths)])
        return self.pieces[off[j - 1]:off[j]]

    def differing(self, other: "ActivationPattern") -> np.ndarray:
        return np.flatnonzero(self.pieces != other.pieces)

    def __eq__(self, other):
        if not isinstance(other, ActivationPattern):
            return NotImplemented
        return self.widths == other.widths and np.array_equal(self.pieces, other.pieces)

    def __hash__(self):
        return hash((self.widths, self.pieces.tobytes()))


@dataclass(frozen=True)
class AffineMap:
    A: np.ndarray
    c: np.ndarray

    def __call__(self, y):
        return np.asarray(y, dtype=float) @ self.A.T + self.c


def _as_batch(net: Network, x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    xb = x[None, :] if single else x
    if xb.ndim != 2 or xb.shape[1] != net.input_dim:
        raise ShapeError(f"expected input of length {net.input_dim}, got shape {x.shape}")
    return xb, single


def forward(net: Network, x):
    """Network output and the pre-activations of every hidden layer.

    Accepts a single point ``(n_in,)`` or a batch ``(N, n_in)``; the returned
    arrays follow the same convention.
    """
    xb, single = _as_batch(net, x)
    act = net.activation
    pres = []
    a = xb
    for w, b in zip(net.weights[:-1], net.biases[:-1]):
        z = a @ w.T + b
        pres.append(z)
        a = act(z)
    out = a @ net.weights[-1].T + net.biases[-1]
    if single:
        return out[0], [z[0] for z in pres]
    return out, pres


def pieces_of(net: Network, pres) -> np.ndarray:
    """Right-closed piece indices for a list of pre-activation arrays, concatenated."""
    return np.concatenate([net.activation.piece_index(z) for z in pres], axis=-1).astype(np.int8)


def boundary_neurons(net: Network, pres) -> list[tuple[int, int]]:
    """(flat neuron index, breakpoint index) pairs whose pre-activation touches a breakpoint."""
    if not pres:
        return []
    z = np.concatenate([np.atleast_1d(p) for p in pres])
    xi = net.activation.xi
    gap = np.abs(z[:, None] - xi[None, :])
    hit = gap <= ON_BOUNDARY_RTOL * (1.0 + np.abs(z))[:, None]
    return [(int(i), int(k)) for i, k in zip(*np.nonzero(hit))]


def activation_pattern(net: Network, x) -> ActivationPattern:
    """Activation pattern at a single point; refuses points on a boundary."""
    _, pres = forward(net, np.asarray(x, dtype=float).reshape(-1))
    hits = boundary_neurons(net, pres)
    if hits:
        raise OnBoundaryError([net.neuron(i) for i, _ in hits], [k for _, k in hits])
    return ActivationPattern(pieces_of(net, pres), net.widths)


def patterns(net: Network, X) -> np.ndarray:
    """Right-closed activation patterns of a batch, shape ``(N, n_hidden)``."""
    _, pres = forward(net, np.atleast_2d(X))
    if not pres:
        return np.zeros((np.atleast_2d(X).shape[0], 0), dtype=np.int8)
    return pieces_of(net, pres)


def preactivation_jacobians(net: Network, x) -> list[np.ndarray]:
    """Jacobians of every hidden layer's pre-activations at ``x``.

    Slopes are those of the right-closed piece, so this is well defined on
    boundaries too.  Entry ``j`` has shape ``(n_{j+1}, n_in)``.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    _, pres = forward(net, x)
    q = net.activation.q
    J = net.weights[0]
    out = [J]
    for j in range(1, net.depth):
        slope = q[net.activation.piece_index(pres[j - 1])]
        J = net.weights[j] @ (slope[:, None] * J)
        out.append(J)
    return out


def neuron_gradient(net: Network, x, z: NeuronRef) -> np.ndarray:
    """Gradient of the pre-activation of ``z`` with respect to the input."""
    net.flat_index(z)
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape[0] != net.input_dim:
        raise ShapeError(f"expected input of length {net.input_dim}, got {x.shape[0]}")
    return preactivation_jacobians(net, x)[z.layer - 1][z.unit].copy()


def local_affine(net: Network, x) -> AffineMap:
    """Affine map computed by the network on the open region containing ``x``."""
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape[0] != net.input_dim:
        raise ShapeError(f"expected input of length {net.input_dim}, got {x.shape[0]}")
    _, pres = forward(net, x)
    hits = boundary_neurons(net, pres)
    if hits:
        raise OnBoundaryError([net.neuron(i) for i, _ in hits], [k for _, k in hits])
    act = net.activation
    A = np.eye(net.input_dim)
    c = np.zeros(net.input_dim)
    for j, (w, b) in enumerate(zip(net.weights, net.biases)):
        A = w @ A
        c = w @ c + b
        if j < net.depth:
            k = act.piece_index(pres[j])
            A = act.q[k][:, None] * A
            c = act.q[k] * c + act.p[k]
    return AffineMap(A, c)


def good_neurons(net: Network, open_mask: Sequence[np.ndarray]) -> list[np.ndarray]:
    """Neurons with a path of open neurons (and nonzero weights) to the output.

    ``open_mask[j]`` flags which neurons of hidden layer ``j+1`` sit on a
    nonzero-slope piece; arrays may carry leading batch dimensions.
    """
    L = net.depth
    good = [None] * L
    reach = np.abs(net.weights[-1]).T.astype(bool).any(axis=1)  # last hidden -> output
    good[L - 1] = np.broadcast_to(reach, np.shape(open_mask[L - 1])).copy()
    for j in range(L - 2, -1, -1):
        nxt = open_mask[j + 1] & good[j + 1]
        conn = (net.weights[j + 1] != 0).astype(float)  # (n_{j+2}, n_{j+1})
        good[j] = (nxt.astype(float) @ conn) > 0
    return good

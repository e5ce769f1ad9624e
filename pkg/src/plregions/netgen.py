"""Random initialization, the sawtooth construction, and weight perturbation."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .network import Network, PiecewiseLinearActivation, relu

GENERATOR = "numpy.random.PCG64/SeedSequence.spawn"
WEIGHT_LAWS = ("normal", "two-point")


@dataclass(frozen=True)
class InitSpec:
    """Architecture plus weight and bias laws.

    ``layer_sizes`` runs from the input to the output.  Weights are
    zero-symmetric with variance ``weight_gain / fan_in``.  ``bias_sd`` is one
    value for every layer or one value per weight layer.
    """

    layer_sizes: tuple[int, ...]
    bias_sd: float | tuple[float, ...] = 1e-3
    weight_law: str = "normal"
    weight_gain: float = 2.0
    seed: int = 0
    activation: PiecewiseLinearActivation = field(default_factory=relu)

    def __post_init__(self):
        sizes = tuple(int(n) for n in self.layer_sizes)
        if len(sizes) < 2 or min(sizes) < 1:
            raise ValueError(f"invalid architecture {self.layer_sizes}")
        object.__setattr__(self, "layer_sizes", sizes)
        if self.weight_law not in WEIGHT_LAWS:
            raise ValueError(f"weight_law must be one of {WEIGHT_LAWS}")
        if self.weight_gain <= 0:
            raise ValueError("weight variance must be positive")
        sd = self.bias_sds
        if np.any(sd < 0) or not np.all(np.isfinite(sd)):
            raise ValueError("bias standard deviations must be finite and >= 0")

    @property
    def n_layers(self) -> int:
        return len(self.layer_sizes) - 1

    @property
    def widths(self) -> tuple[int, ...]:
        return self.layer_sizes[1:-1]

    @property
    def bias_sds(self) -> np.ndarray:
        sd = np.atleast_1d(np.asarray(self.bias_sd, dtype=float))
        if sd.size == 1:
            return np.full(self.n_layers, sd[0])
        if sd.size != self.n_layers:
            raise ValueError(f"need {self.n_layers} bias sds, got {sd.size}")
        return sd

    def with_seed(self, seed: int) -> "InitSpec":
        return InitSpec(self.layer_sizes, self.bias_sd, self.weight_law, self.weight_gain,
                        int(seed), self.activation)


def _layer_rngs(seed: int, n: int) -> list[np.random.Generator]:
    return [np.random.default_rng(s) for s in np.random.SeedSequence(int(seed)).spawn(n)]


def he_init(spec: InitSpec) -> Network:
    """Draw a network from ``spec``; bit-identical for equal seeds."""
    rngs = _layer_rngs(spec.seed, 2 * spec.n_layers)
    sizes = spec.layer_sizes
    sds = spec.bias_sds
    weights, biases = [], []
    for j in range(spec.n_layers):
        fan_in, fan_out = sizes[j], sizes[j + 1]
        scale = math.sqrt(spec.weight_gain / fan_in)
        rw, rb = rngs[2 * j], rngs[2 * j + 1]
        if spec.weight_law == "normal":
            w = rw.normal(0.0, scale, size=(fan_out, fan_in))
        else:
            w = scale * (2.0 * rw.integers(0, 2, size=(fan_out, fan_in)) - 1.0)
        b = rb.normal(0.0, sds[j], size=fan_out) if sds[j] > 0 else np.zeros(fan_out)
        weights.append(w)
        biases.append(b)
    meta = {
        "seed": int(spec.seed),
        "generator": GENERATOR,
        "weight_law": spec.weight_law,
        "weight_variance": f"{spec.weight_gain}/fan_in",
        "bias_sd": [float(s) for s in sds],
    }
    return Network(tuple(weights), tuple(biases), spec.activation, meta)


def triangle(x):
    """Tent map on [0, 1], zero outside."""
    x = np.asarray(x, dtype=float)
    return np.where((x >= 0) & (x <= 1), np.where(x <= 0.5, 2 * x, 2 - 2 * x), 0.0)


def sawtooth_reference(x, n: int):
    """Closed-form sawtooth: the tent map composed ``n + 1`` times."""
    y = np.asarray(x, dtype=float)
    for _ in range(n + 1):
        y = triangle(y)
    return y


def build_sawtooth(n: int) -> Network:
    """1 -> 1 ReLU network with 2**n teeth on [0, 1] and 3n + 4 neurons.

    Each hidden layer holds ``relu(y + 1)``, ``relu(y - 1/2)``, ``relu(y - 2)``;
    the combination ``2a - 4b + 2c - 2`` is the tent map extended linearly
    over [-1, 2] and is folded into the next layer.  No threshold sits at the
    ends of the tent's range [0, 1], so the pieces are not tangencies.
    """
    if n < 1:
        raise ValueError("tooth exponent must be >= 1")
    combo = np.array([[2.0, -4.0, 2.0]])
    shift = -2.0
    thresholds = np.array([1.0, -0.5, -2.0])
    weights = [np.ones((3, 1))]
    biases = [thresholds.copy()]
    for _ in range(n):
        weights.append(np.repeat(combo, 3, axis=0))
        biases.append(thresholds + shift)
    weights.append(combo.copy())
    biases.append(np.array([shift]))
    return Network(tuple(weights), tuple(biases), relu(),
                   {"construction": "sawtooth", "teeth_exponent": int(n)})


def perturb(net: Network, noise_sd: float, seed: int = 0) -> Network:
    """Add independent N(0, noise_sd**2) noise to every weight and bias."""
    if noise_sd < 0:
        raise ValueError("noise_sd must be >= 0")
    if noise_sd == 0:
        return net.with_params(perturbation={"noise_sd": 0.0, "seed": int(seed)})
    rngs = _layer_rngs(seed, 2 * len(net.weights))
    ws = [w + rngs[2 * j].normal(0.0, noise_sd, size=w.shape) for j, w in enumerate(net.weights)]
    bs = [b + rngs[2 * j + 1].normal(0.0, noise_sd, size=b.shape)
          for j, b in enumerate(net.biases)]
    return net.with_params(ws, bs, perturbation={"noise_sd": float(noise_sd), "seed": int(seed),
                                                 "generator": GENERATOR})


def normal_pdf(b, sd):
    return np.exp(-0.5 * (np.asarray(b, dtype=float) / sd) ** 2) / (sd * math.sqrt(2 * math.pi))


@dataclass(frozen=True)
class BiasDensity:
    """Normal bias laws of the hidden layers and their density constants."""

    sds: tuple[float, ...]
    eta: float
    C_bias: float
    c_bias: float

    def pdf(self, b, layer: int):
        """Density of the bias of a neuron in hidden ``layer`` (1-based)."""
        return normal_pdf(b, self.sds[layer - 1])

    def inf_density(self, eta: float) -> float:
        return float(min(normal_pdf(eta, s) for s in self.sds))


def bias_density_stats(bias_sd: float | Sequence[float] | InitSpec, eta: float) -> BiasDensity:
    """``C_bias = sup_z sup_b rho(b)`` and ``c_bias = inf_z inf_{|b|<=eta} rho(b)``."""
    if eta < 0:
        raise ValueError("eta must be >= 0")
    if isinstance(bias_sd, InitSpec):
        sds = tuple(float(s) for s in bias_sd.bias_sds[:-1]) or (float(bias_sd.bias_sds[0]),)
    else:
        sds = tuple(float(s) for s in np.atleast_1d(bias_sd))
    if min(sds) <= 0:
        raise ValueError("a bias density needs a positive standard deviation")
    C = max(1.0 / (s * math.sqrt(2 * math.pi)) for s in sds)
    c = min(float(normal_pdf(eta, s)) for s in sds)
    return BiasDensity(sds, float(eta), float(C), c)


def lower_bound_eta(sup_norm_sq: float, n_in: int, bias_sds: Sequence[float],
                    widths: Sequence[int], C_prime: float = 1.0) -> float:
    """Half-width ``eta`` of the bias window used by the lower volume bound.

    ``(sup_K |x|^2 / n_in + sum_j sigma_j^2) * exp(C' * sum_j 1/n_j)``; the
    absolute constant ``C'`` is not known and defaults to 1.
    """
    s2 = float(np.sum(np.square(bias_sds)))
    return (sup_norm_sq / n_in + s2) * math.exp(C_prime * float(np.sum(1.0 / np.asarray(widths))))

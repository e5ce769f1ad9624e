"""Exact linear regions along segments and lines.

The network is built up one layer at a time.  On every current interval the
previous layer's post-activations are affine in the line parameter ``t``, so
each neuron's pre-activation is affine there too and its breakpoint crossings
are solved for directly; the interval is then split at those crossings.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .network import Network, NeuronRef, ShapeError

MERGE_RTOL = 1e-12
GRADIENT_JUMP_RTOL = 1e-8


@dataclass(frozen=True)
class Crossing:
    t: float
    neurons: tuple[tuple[int, int], ...]   # (flat neuron index, breakpoint index)
    merged: bool = False                   # several neurons within merge tolerance


@dataclass(frozen=True, eq=False)
class LinePartition:
    """Regions of a network along ``x(t) = base + t * direction``, ``t`` in ``t_range``."""

    base: np.ndarray
    direction: np.ndarray
    t_range: tuple[float, float]
    crossings: tuple[Crossing, ...]
    patterns: np.ndarray          # (n_regions, n_hidden) piece indices
    out_offset: np.ndarray        # (n_regions, n_out): output(t) = offset + t * slope
    out_slope: np.ndarray
    widths: tuple[int, ...] = ()
    filtered: bool = False
    touches: tuple[Crossing, ...] = field(default=())  # breakpoint hits on existing cuts

    @property
    def n_regions(self) -> int:
        return len(self.crossings) + 1

    @property
    def n_crossings(self) -> int:
        return len(self.crossings)

    @property
    def ts(self) -> np.ndarray:
        return np.array([c.t for c in self.crossings], dtype=float)

    @property
    def bounds(self) -> np.ndarray:
        return np.concatenate([[self.t_range[0]], self.ts, [self.t_range[1]]])

    @property
    def n_merged(self) -> int:
        return sum(c.merged for c in self.crossings)

    def point(self, t) -> np.ndarray:
        return self.base + np.multiply.outer(np.asarray(t, dtype=float), self.direction)

    def crossing_neurons(self, i: int) -> list[tuple[NeuronRef, int]]:
        off = np.concatenate([[0], np.cumsum(self.widths)])
        out = []
        for flat, k in self.crossings[i].neurons:
            layer = int(np.searchsorted(off, flat, side="right"))
            out.append((NeuronRef(layer, int(flat - off[layer - 1])), k))
        return out

    def interval_of(self, t: float) -> int:
        return int(np.searchsorted(self.ts, t, side="right"))

    def output(self, t: float) -> np.ndarray:
        """Network output at parameter ``t`` from the stored affine pieces."""
        k = self.interval_of(t)
        return self.out_offset[k] + t * self.out_slope[k]


def _tol(t):
    return MERGE_RTOL * (1.0 + np.abs(t))


def _representative(lo: float, hi: float) -> float:
    if math.isinf(lo) and math.isinf(hi):
        return 0.0
    if math.isinf(lo):
        return hi - max(1.0, abs(hi))
    if math.isinf(hi):
        return lo + max(1.0, abs(lo))
    return 0.5 * (lo + hi)


def partition_line(net: Network, base, direction, t_lo: float = -math.inf,
                   t_hi: float = math.inf) -> LinePartition:
    """Exact partition of ``{base + t * direction : t_lo <= t <= t_hi}``."""
    base = np.asarray(base, dtype=float).reshape(-1)
    direction = np.asarray(direction, dtype=float).reshape(-1)
    if base.shape[0] != net.input_dim or direction.shape[0] != net.input_dim:
        raise ShapeError(f"points must have length {net.input_dim}")
    if not np.any(direction != 0):
        raise ValueError("direction must be nonzero")
    if not t_lo < t_hi:
        raise ValueError("empty parameter range")

    act = net.activation
    xi, q, p = act.xi, act.q, act.p
    # per interval: post-activation of the previous layer as a + t * s
    bounds = [t_lo, t_hi]
    cuts: list[Crossing] = []
    touches: list[Crossing] = []
    a = base[None, :]
    s = direction[None, :]
    pieces: list[np.ndarray] = [np.zeros((1, 0), dtype=np.int8)]
    offset = 0
    for j in range(net.depth):
        w, b = net.weights[j], net.biases[j]
        alpha = a @ w.T + b
        beta = s @ w.T
        n = w.shape[0]
        new_bounds = [bounds[0]]
        new_cuts: list[Crossing] = []
        new_alpha, new_beta, new_pieces, rows = [], [], [], []
        for k in range(len(bounds) - 1):
            lo, hi = bounds[k], bounds[k + 1]
            al, be = alpha[k], beta[k]
            with np.errstate(divide="ignore", invalid="ignore"):
                roots = (xi[None, :] - al[:, None]) / be[:, None]
            unit, bp = np.nonzero(np.isfinite(roots))
            r = roots[unit, bp]
            lo_lim = lo + _tol(lo) if math.isfinite(lo) else -math.inf
            hi_lim = hi - _tol(hi) if math.isfinite(hi) else math.inf
            inside = (r > lo_lim) & (r < hi_lim)
            # hits on the interval ends: record, no new cut
            at_lo = ~inside & (np.abs(r - lo) <= _tol(lo))
            at_hi = ~inside & (np.abs(r - hi) <= _tol(hi))
            for mask, tt in ((at_lo, lo), (at_hi, hi)):
                if mask.any() and math.isfinite(tt):
                    touches.append(Crossing(float(tt), tuple(
                        (offset + int(u), int(i)) for u, i in zip(unit[mask], bp[mask])), True))
            order = np.argsort(r[inside], kind="stable")
            r_in = r[inside][order]
            u_in = unit[inside][order]
            b_in = bp[inside][order]
            groups: list[list[int]] = []
            for idx in range(r_in.size):
                if groups and r_in[idx] - r_in[groups[-1][-1]] <= _tol(r_in[idx]):
                    groups[-1].append(idx)
                else:
                    groups.append([idx])
            sub = [lo] + [float(np.mean(r_in[g])) for g in groups] + [hi]
            for g in groups:
                new_cuts.append(Crossing(float(np.mean(r_in[g])), tuple(
                    (offset + int(u_in[i]), int(b_in[i])) for i in g), len(g) > 1))
            for m in range(len(sub) - 1):
                t_rep = _representative(sub[m], sub[m + 1])
                piece = act.piece_index(al + t_rep * be)
                new_alpha.append(q[piece] * al + p[piece])
                new_beta.append(q[piece] * be)
                new_pieces.append(piece.astype(np.int8))
                rows.append(k)
                new_bounds.append(sub[m + 1])
            if k < len(bounds) - 2:
                new_cuts.append(cuts[k])
        # new_cuts interleaves fresh cuts and carried-over ones in order
        bounds = new_bounds
        cuts = new_cuts
        a = np.array(new_alpha).reshape(len(rows), n)
        s = np.array(new_beta).reshape(len(rows), n)
        pieces = [np.concatenate([pieces[0][rows], np.array(new_pieces).reshape(len(rows), n)],
                                 axis=1)]
        offset += n
    w, b = net.weights[-1], net.biases[-1]
    out_off = a @ w.T + b
    out_slope = s @ w.T
    return LinePartition(base, direction, (float(t_lo), float(t_hi)), tuple(cuts), pieces[0],
                         out_off, out_slope, net.widths, False, tuple(touches))


def count_regions_on_segment(net: Network, p0, p1) -> LinePartition:
    """Exact partition of the segment from ``p0`` (t=0) to ``p1`` (t=1)."""
    p0 = np.asarray(p0, dtype=float).reshape(-1)
    p1 = np.asarray(p1, dtype=float).reshape(-1)
    if np.array_equal(p0, p1):
        raise ValueError("segment endpoints coincide")
    return partition_line(net, p0, p1 - p0, 0.0, 1.0)


def count_regions_on_line(net: Network, point, direction) -> LinePartition:
    """Exact partition of the whole line through ``point`` along ``direction``."""
    return partition_line(net, point, direction)


def count_regions_on_polyline(net: Network, points) -> tuple[int, list[LinePartition]]:
    """Regions met by a polyline; a joint that is not itself a crossing is not a cut."""
    pts = np.asarray(points, dtype=float)
    parts = [count_regions_on_segment(net, pts[i], pts[i + 1]) for i in range(len(pts) - 1)]
    total = sum(pt.n_regions for pt in parts) - (len(parts) - 1)
    for left, right in zip(parts[:-1], parts[1:]):
        if not np.array_equal(left.patterns[-1], right.patterns[0]):
            total += 1
    return total, parts


def gradient_jumps(partition: LinePartition) -> np.ndarray:
    """Relative jump of the output's derivative along the line at each crossing."""
    sl = partition.out_slope
    if sl.shape[0] < 2:
        return np.zeros(0)
    d = np.linalg.norm(sl[1:] - sl[:-1], axis=1)
    ref = np.maximum(np.linalg.norm(sl[1:], axis=1), np.linalg.norm(sl[:-1], axis=1))
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(ref > 0, d / ref, 0.0)


def filter_crossings_by_gradient(partition: LinePartition, net: Network | None = None,
                                 rtol: float = GRADIENT_JUMP_RTOL) -> LinePartition:
    """Keep only crossings where the output's derivative along the line jumps.

    Crossings of neurons that do not influence the output (no open path) leave
    the gradient continuous and are dropped.  ``net`` is accepted for API
    symmetry; the partition already carries the per-interval output slopes.
    """
    keep = np.flatnonzero(gradient_jumps(partition) > rtol)
    first = np.concatenate([[0], keep + 1])
    return LinePartition(partition.base, partition.direction, partition.t_range,
                         tuple(partition.crossings[i] for i in keep), partition.patterns[first],
                         partition.out_offset[first], partition.out_slope[first],
                         partition.widths, True, partition.touches)


def lines_through_origin(points) -> list[tuple[np.ndarray, np.ndarray]]:
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    return [(np.zeros(pts.shape[1]), pt) for pt in pts]


def count_lines(net: Network, lines: Iterable[tuple], threads: int = 1,
                filtered: bool = False) -> list[LinePartition]:
    """Partition many infinite lines ``(point, direction)``, optionally in threads."""
    def one(line):
        part = count_regions_on_line(net, line[0], line[1])
        return filter_crossings_by_gradient(part) if filtered else part
    lines = list(lines)
    if threads <= 1:
        return [one(ln) for ln in lines]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(one, lines))


def regions_per_neuron(net: Network, lines: Sequence[tuple], threads: int = 1) -> np.ndarray:
    return np.array([pt.n_regions for pt in count_lines(net, lines, threads)]) / net.n_hidden

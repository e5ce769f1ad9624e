"""Exact linear regions of a network on a square in a 2-D slice of input space.

The square is cut neuron by neuron, layer by layer.  Every current polygon
lies inside one region of the layers processed so far, so the next layer's
pre-activations are affine on it and each breakpoint line is a straight
chord.  Polygons keep their collinear (T-junction) vertices, which makes
every elementary edge shared by at most two polygons.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import chain

import numpy as np

from . import kernels
from .network import ActivationPattern, AffineMap, Network, NeuronRef, ShapeError

SNAP_RTOL = 1e-10      # vertex-to-line distance, relative to the side length
THIN_RTOL = 1e-12      # polygon area, relative to side**2
FRAME = -1             # label of frame edges and frame-generated vertices


@dataclass(frozen=True, eq=False)
class SliceFrame:
    """Square of side ``side`` centered at ``origin`` in the plane spanned by ``U``."""

    origin: np.ndarray
    U: np.ndarray                 # (n_in, 2), orthonormal columns
    side: float
    anchors: np.ndarray | None = None   # anchor points in slice coordinates

    def __post_init__(self):
        o = np.asarray(self.origin, dtype=float).reshape(-1)
        U = np.asarray(self.U, dtype=float)
        if U.shape != (o.size, 2):
            raise ShapeError(f"directions must have shape ({o.size}, 2), got {U.shape}")
        if np.max(np.abs(U.T @ U - np.eye(2))) > 1e-10:
            raise ValueError("slice directions must be orthonormal")
        if not self.side > 0:
            raise ValueError("square side must be positive")
        object.__setattr__(self, "origin", o)
        object.__setattr__(self, "U", U)
        object.__setattr__(self, "side", float(self.side))
        if self.anchors is not None:
            object.__setattr__(self, "anchors", np.asarray(self.anchors, dtype=float).reshape(-1, 2))

    @property
    def input_dim(self) -> int:
        return self.origin.size

    @property
    def half(self) -> float:
        return 0.5 * self.side

    def embed(self, uv) -> np.ndarray:
        return self.origin + np.asarray(uv, dtype=float) @ self.U.T

    def project(self, x) -> np.ndarray:
        return (np.asarray(x, dtype=float) - self.origin) @ self.U

    def contains(self, uv, tol: float = 0.0) -> np.ndarray:
        uv = np.asarray(uv, dtype=float)
        return np.all(np.abs(uv) <= self.half + tol, axis=-1)

    @classmethod
    def axis_aligned(cls, n_in: int, side: float, origin=None, dims=(0, 1)) -> "SliceFrame":
        U = np.zeros((n_in, 2))
        U[dims[0], 0] = 1.0
        U[dims[1], 1] = 1.0
        return cls(np.zeros(n_in) if origin is None else origin, U, side)

    @classmethod
    def through_points(cls, p1, p2, p3, side_factor: float = 2.0) -> "SliceFrame":
        """Plane through three points, centered at their circumcenter.

        The side defaults to twice the circumradius so the square contains the
        circumcircle.
        """
        p1, p2, p3 = (np.asarray(p, dtype=float).reshape(-1) for p in (p1, p2, p3))
        e1 = p2 - p1
        n1 = np.linalg.norm(e1)
        if n1 == 0:
            raise ValueError("anchor points coincide")
        e1 /= n1
        e2 = p3 - p1 - ((p3 - p1) @ e1) * e1
        n2 = np.linalg.norm(e2)
        if n2 <= 1e-12 * max(n1, np.linalg.norm(p3 - p1)):
            raise ValueError("anchor points are collinear")
        e2 /= n2
        U = np.stack([e1, e2], axis=1)
        P = (np.stack([p1, p2, p3]) - p1) @ U
        (bx, by), (cx, cy) = P[1], P[2]
        d = 2.0 * (bx * cy - by * cx)
        ux = (cy * (bx * bx + by * by) - by * (cx * cx + cy * cy)) / d
        uy = (bx * (cx * cx + cy * cy) - cx * (bx * bx + by * by)) / d
        center = np.array([ux, uy])
        R = float(np.hypot(ux, uy))
        return cls(p1 + U @ center, U, side_factor * R, P - center)


@dataclass(frozen=True, eq=False)
class PlaneArena:
    """Polygonal decomposition of a slice square into linear regions."""

    frame: SliceFrame
    vertices: np.ndarray          # (V, 2) slice coordinates
    polygons: tuple               # CCW vertex-id arrays, collinear vertices kept
    patterns: np.ndarray          # (F, n_hidden) piece indices
    out_A: np.ndarray             # (F, n_out, 2): output = out_A @ uv + out_c
    out_c: np.ndarray             # (F, n_out)
    edges: np.ndarray             # (E, 2) vertex ids of elementary edges
    edge_label: np.ndarray        # (E, 2) generating (flat neuron, breakpoint); FRAME on the frame
    edge_polys: np.ndarray        # (E, 2) adjacent polygons, -1 when absent
    vertex_gen: np.ndarray        # (V, 2) generating flat neurons, FRAME for frame lines
    widths: tuple[int, ...]
    snapped: tuple = ()           # (vertex id, flat neuron) where a line met an older vertex
    thin: tuple = ()              # ids of polygons below the area threshold
    skipped: tuple = ()           # (polygon id, flat neuron) splits refused as inconsistent
    _csr: tuple = field(default=None, repr=False)

    @property
    def n_regions(self) -> int:
        return len(self.polygons)

    @property
    def side(self) -> float:
        return self.frame.side

    def csr(self) -> tuple[np.ndarray, np.ndarray]:
        if self._csr is None:
            lens = np.fromiter((len(p) for p in self.polygons), dtype=np.int64,
                               count=len(self.polygons))
            indptr = np.concatenate([[0], np.cumsum(lens)])
            ids = np.concatenate(self.polygons).astype(np.int64)
            object.__setattr__(self, "_csr", (ids, indptr))
        return self._csr

    @property
    def interior_edges(self) -> np.ndarray:
        return self.edge_label[:, 0] != FRAME

    @property
    def on_frame(self) -> np.ndarray:
        h = self.frame.half
        tol = SNAP_RTOL * self.side
        return np.any(np.abs(np.abs(self.vertices) - h) <= tol, axis=1)

    @property
    def interior_vertices(self) -> np.ndarray:
        return ~self.on_frame

    def edge_lengths(self) -> np.ndarray:
        d = self.vertices[self.edges[:, 1]] - self.vertices[self.edges[:, 0]]
        return np.hypot(d[:, 0], d[:, 1])

    def areas(self) -> np.ndarray:
        ids, indptr = self.csr()
        nxt = np.arange(1, ids.size + 1)
        nxt[indptr[1:] - 1] = indptr[:-1]
        x, y = self.vertices[ids, 0], self.vertices[ids, 1]
        cross = x * y[nxt] - x[nxt] * y
        return 0.5 * np.add.reduceat(cross, indptr[:-1])

    def perimeters(self) -> np.ndarray:
        ids, indptr = self.csr()
        nxt = np.arange(1, ids.size + 1)
        nxt[indptr[1:] - 1] = indptr[:-1]
        d = self.vertices[ids[nxt]] - self.vertices[ids]
        return np.add.reduceat(np.hypot(d[:, 0], d[:, 1]), indptr[:-1])

    def centroids(self) -> np.ndarray:
        """Vertex averages; interior points of the convex polygons."""
        ids, indptr = self.csr()
        s = np.add.reduceat(self.vertices[ids], indptr[:-1], axis=0)
        return s / np.diff(indptr)[:, None]

    def affine(self, pid: int) -> AffineMap:
        return AffineMap(self.out_A[pid], self.out_c[pid])

    def pattern(self, pid: int) -> ActivationPattern:
        return ActivationPattern(self.patterns[pid], self.widths)

    def edge_neuron(self, e: int) -> NeuronRef | None:
        flat = int(self.edge_label[e, 0])
        if flat == FRAME:
            return None
        off = np.concatenate([[0], np.cumsum(self.widths)])
        layer = int(np.searchsorted(off, flat, side="right"))
        return NeuronRef(layer, int(flat - off[layer - 1]))

    def adjacency(self) -> np.ndarray:
        """Pairs of polygons sharing an interior edge, each pair once."""
        ep = self.edge_polys[self.interior_edges]
        ep = ep[(ep >= 0).all(axis=1)]
        return np.unique(np.sort(ep, axis=1), axis=0)

    def check_invariants(self) -> dict:
        """Structural checks; every entry is a boolean or a count of offenders."""
        area = self.areas()
        total = float(area.sum())
        interior = self.interior_edges
        cover = (self.edge_polys >= 0).sum(axis=1)
        V = len(self.vertices)
        E = len(self.edges)
        F = len(self.polygons)
        adj = self.adjacency()
        if adj.size:
            diff = (self.patterns[adj[:, 0]] != self.patterns[adj[:, 1]]).sum(axis=1)
        else:
            diff = np.zeros(0, dtype=int)
        iv = self.interior_vertices
        gen_ok = (self.vertex_gen[iv] >= 0).all(axis=1) & \
            (self.vertex_gen[iv, 0] != self.vertex_gen[iv, 1])
        return {
            "area_relative_error": abs(total - self.side ** 2) / self.side ** 2,
            "area_conserved": abs(total - self.side ** 2) <= 1e-6 * self.side ** 2,
            "all_positive_area": bool(np.all(area > 0)),
            "convex": self._convex(),
            "interior_edges_two_sided": bool(np.all(cover[interior] == 2)),
            "frame_edges_one_sided": bool(np.all(cover[~interior] == 1)),
            "euler": V - E + F,
            "euler_ok": V - E + F == 1,
            "adjacent_differ_in_one": int(np.sum(diff != 1)),
            "vertices_two_neurons": int(np.sum(~gen_ok)),
            "snapped": len(self.snapped),
            "thin": len(self.thin),
            "skipped": len(self.skipped),
        }

    def _convex(self) -> bool:
        tol = SNAP_RTOL * self.side ** 2
        for poly in self.polygons:
            P = self.vertices[poly]
            a = np.roll(P, -1, axis=0) - P
            b = np.roll(P, -2, axis=0) - np.roll(P, -1, axis=0)
            if np.any(a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0] < -tol):
                return False
        return True


class _Builder:
    """Mutable state of the incremental subdivision."""

    def __init__(self, half: float, tol: float):
        self.tol = tol
        h = half
        self.V = [(-h, -h), (h, -h), (h, h), (-h, h)]
        self.vgen = [(FRAME, FRAME)] * 4
        self.polys: list[list[int]] = [[0, 1, 2, 3]]
        self.parent = [0]
        # edge (min, max) -> [neuron, breakpoint, poly, poly]
        self.edges: dict[tuple[int, int], list[int]] = {
            (0, 1): [FRAME, FRAME, 0, -1], (1, 2): [FRAME, FRAME, 0, -1],
            (2, 3): [FRAME, FRAME, 0, -1], (0, 3): [FRAME, FRAME, 0, -1]}
        self.snapped: list[tuple[int, int]] = []
        self.skipped: list[tuple[int, int]] = []
        self.Xs = np.array([p[0] for p in self.V])
        self.Ys = np.array([p[1] for p in self.V])
        self._dirty = False

    def coords(self) -> tuple[np.ndarray, np.ndarray]:
        if self._dirty:
            arr = np.asarray(self.V)
            self.Xs, self.Ys = arr[:, 0].copy(), arr[:, 1].copy()
            self._dirty = False
        return self.Xs, self.Ys

    def csr(self) -> tuple[np.ndarray, np.ndarray]:
        lens = np.fromiter((len(p) for p in self.polys), dtype=np.int64, count=len(self.polys))
        indptr = np.zeros(lens.size + 1, dtype=np.int64)
        np.cumsum(lens, out=indptr[1:])
        ids = np.fromiter(chain.from_iterable(self.polys), dtype=np.int64, count=int(indptr[-1]))
        return ids, indptr

    def _new_vertex(self, x: float, y: float, gen: tuple[int, int]) -> int:
        self.V.append((x, y))
        self.vgen.append(gen)
        self._dirty = True
        return len(self.V) - 1

    @staticmethod
    def _key(a: int, b: int) -> tuple[int, int]:
        return (a, b) if a < b else (b, a)

    def _split_edge(self, a: int, b: int, m: int, skip: int) -> None:
        """Insert vertex ``m`` on edge ``a-b`` in every polygon but ``skip``."""
        rec = self.edges.pop(self._key(a, b))
        self.edges[self._key(a, m)] = list(rec)
        self.edges[self._key(m, b)] = list(rec)
        for q in rec[2:]:
            if q < 0 or q == skip:
                continue
            poly = self.polys[q]
            i = poly.index(a)
            n = len(poly)
            if poly[(i + 1) % n] == b:
                poly.insert(i + 1, m)
            else:
                poly.insert(i, m)

    def split(self, pid: int, gx: float, gy: float, c: float, flat: int, bp: int) -> int:
        """Cut polygon ``pid`` along ``gx*u + gy*v + c = 0``.

        Returns the id of the new polygon on the negative side, or -1 when the
        line does not cross the interior.
        """
        poly = self.polys[pid]
        gn = math.hypot(gx, gy)
        P = [self.V[i] for i in poly]
        vals = [gx * x + gy * y + c for x, y in P]
        thr = self.tol * gn
        sgn = [0 if abs(v) <= thr else (1 if v > 0 else -1) for v in vals]
        if 1 not in sgn or -1 not in sgn:
            return -1
        n = len(poly)
        cyc: list[int] = []
        cs: list[int] = []
        for i in range(n):
            a = poly[i]
            cyc.append(a)
            cs.append(sgn[i])
            j = (i + 1) % n
            if sgn[i] * sgn[j] < 0:
                b = poly[j]
                t = vals[i] / (vals[i] - vals[j])
                (xa, ya), (xb, yb) = P[i], P[j]
                label = self.edges[self._key(a, b)][0]
                m = self._new_vertex(xa + t * (xb - xa), ya + t * (yb - ya), (label, flat))
                self._split_edge(a, b, m, pid)
                cyc.append(m)
                cs.append(0)
        # the negative side must be one contiguous run bracketed by zeros
        n = len(cyc)
        starts = [k for k in range(n) if cs[k] < 0 and cs[k - 1] >= 0]
        if len(starts) != 1:
            self.skipped.append((pid, flat))
            return -1
        j = starts[0]
        k = j
        last_neg = j
        while cs[(k + 1) % n] <= 0 and (k + 1) % n != j:
            k = (k + 1) % n
            if cs[k] < 0:
                last_neg = k
        za = (j - 1) % n
        zb = (last_neg + 1) % n
        if cs[za] != 0 or cs[zb] != 0 or any(cs[(last_neg + 1 + r) % n] < 0
                                              for r in range((k - last_neg) % n)):
            self.skipped.append((pid, flat))
            return -1
        for z in (za, zb):
            v = cyc[z]
            if flat not in self.vgen[v]:
                self.snapped.append((v, flat))
        neg = [cyc[(za + r) % n] for r in range((zb - za) % n + 1)]
        pos = [cyc[(zb + r) % n] for r in range((za - zb) % n + 1)]
        new = len(self.polys)
        self.polys[pid] = pos
        self.polys.append(neg)
        self.parent.append(self.parent[pid])
        for r in range(len(neg) - 1):
            rec = self.edges[self._key(neg[r], neg[r + 1])]
            if rec[2] == pid:
                rec[2] = new
            elif rec[3] == pid:
                rec[3] = new
        self.edges[self._key(cyc[za], cyc[zb])] = [flat, bp, pid, new]
        return new


def enumerate_plane(net: Network, frame: SliceFrame, order=None) -> PlaneArena:
    """Exact decomposition of the slice square into the network's linear regions.

    ``order`` optionally gives, per hidden layer, the order in which its
    neurons cut the polygons (index order by default).
    """
    if frame.input_dim != net.input_dim:
        raise ShapeError(f"frame lives in dimension {frame.input_dim}, network expects "
                         f"{net.input_dim}")
    act = net.activation
    xi, q, p = act.xi, act.q, act.p
    B = _Builder(frame.half, SNAP_RTOL * frame.side)
    # affine map of the current layer's pre-activations per parent region
    G = (net.weights[0] @ frame.U)[None]                       # (R, n, 2)
    H = (net.weights[0] @ frame.origin + net.biases[0])[None]  # (R, n)
    pieces: list[np.ndarray] = []
    offset = 0
    for j in range(net.depth):
        n = net.weights[j].shape[0]
        units = range(n) if order is None else order[j]
        for u in units:
            flat = offset + int(u)
            ids, indptr = B.csr()
            X, Y = B.coords()
            par = np.asarray(B.parent)
            gx, gy, h = G[par, u, 0], G[par, u, 1], H[par, u]
            vmin, vmax = kernels.poly_range(ids, indptr, gx, gy, h, X, Y)
            thr = B.tol * np.hypot(gx, gy)
            for k, x in enumerate(xi):
                hit = np.flatnonzero((vmin - x < -thr) & (vmax - x > thr))
                for pid in hit:
                    pid = int(pid)
                    new = B.split(pid, gx[pid], gy[pid], h[pid] - x, flat, k)
                    if new >= 0 and k + 1 < xi.size:
                        # the upper piece may still meet later breakpoints
                        gx = np.append(gx, gx[pid])
                        gy = np.append(gy, gy[pid])
                        h = np.append(h, h[pid])
                if k + 1 < xi.size:
                    ids, indptr = B.csr()
                    X, Y = B.coords()
                    vmin, vmax = kernels.poly_range(ids, indptr, gx, gy, h, X, Y)
                    thr = B.tol * np.hypot(gx, gy)
        # pattern of this layer at each polygon's vertex average
        ids, indptr = B.csr()
        X, Y = B.coords()
        cnt = np.diff(indptr)
        cen = np.stack([np.add.reduceat(X[ids], indptr[:-1]),
                        np.add.reduceat(Y[ids], indptr[:-1])], axis=1) / cnt[:, None]
        par = np.asarray(B.parent)
        Gp, Hp = G[par], H[par]
        pre = np.einsum("fnk,fk->fn", Gp, cen) + Hp
        piece = act.piece_index(pre)
        pieces = [pc[par] for pc in pieces] + [piece.astype(np.int8)]
        slope = q[piece]
        A_post = slope[:, :, None] * Gp
        c_post = slope * Hp + p[piece]
        W, b = net.weights[j + 1], net.biases[j + 1]
        G = np.einsum("mn,fnk->fmk", W, A_post)
        H = c_post @ W.T + b
        B.parent = list(range(len(B.polys)))
        offset += n
    if net.depth == 0:
        pieces = [np.zeros((1, 0), dtype=np.int8)]
    par = np.asarray(B.parent)
    out_A, out_c = G[par], H[par]
    patterns = np.concatenate(pieces, axis=1) if pieces else np.zeros((len(B.polys), 0), np.int8)

    keys = list(B.edges.keys())
    recs = list(B.edges.values())
    edges = np.array(keys, dtype=np.int64).reshape(-1, 2)
    rec = np.array(recs, dtype=np.int64).reshape(-1, 4)
    polys = tuple(np.asarray(pl, dtype=np.int64) for pl in B.polys)
    arena = PlaneArena(frame, np.asarray(B.V, dtype=float), polys, patterns, out_A, out_c,
                       edges, rec[:, :2], rec[:, 2:], np.asarray(B.vgen, dtype=np.int64),
                       tuple(net.widths), tuple(B.snapped), (), tuple(B.skipped))
    thin = np.flatnonzero(np.abs(arena.areas()) < THIN_RTOL * frame.side ** 2)
    object.__setattr__(arena, "thin", tuple(int(t) for t in thin))
    return arena


@dataclass(frozen=True)
class RegionStats:
    n_regions: int
    edge_length: float          # total interior edge length
    n_vertices: int             # interior vertices
    n_interior_edges: int
    area: float
    area_hist: tuple[np.ndarray, np.ndarray]
    perimeter_hist: tuple[np.ndarray, np.ndarray]

    @property
    def edge_density(self) -> float:
        return self.edge_length / self.area

    @property
    def vertex_density(self) -> float:
        return self.n_vertices / self.area

    @property
    def region_density(self) -> float:
        return self.n_regions / self.area


def region_stats(arena: PlaneArena, bins: int = 50) -> RegionStats:
    """Region count, boundary length and vertex count, with size histograms."""
    interior = arena.interior_edges
    length = float(arena.edge_lengths()[interior].sum())
    areas = arena.areas()
    perims = arena.perimeters()
    return RegionStats(arena.n_regions, length, int(arena.interior_vertices.sum()),
                       int(interior.sum()), arena.side ** 2,
                       np.histogram(areas, bins=bins), np.histogram(perims, bins=bins))


@dataclass(frozen=True)
class PointQuery:
    polygon: int
    pattern: ActivationPattern
    affine: AffineMap
    on_boundary: bool


def query_point(arena: PlaneArena, uv) -> PointQuery:
    """Polygon containing a slice point; shared-edge ties go to the lowest id."""
    uv = np.asarray(uv, dtype=float).reshape(2)
    tol = SNAP_RTOL * arena.side
    if not arena.frame.contains(uv, tol):
        raise ValueError(f"point {uv} lies outside the square")
    hits = _containing(arena, uv, tol)
    pid = int(hits[0])
    return PointQuery(pid, arena.pattern(pid), arena.affine(pid), len(hits) > 1)


def _containing(arena: PlaneArena, uv: np.ndarray, tol: float) -> np.ndarray:
    ids, indptr = arena.csr()
    P = arena.vertices[ids]
    lo = np.minimum.reduceat(P, indptr[:-1], axis=0)
    hi = np.maximum.reduceat(P, indptr[:-1], axis=0)
    cand = np.flatnonzero(np.all((lo - tol <= uv) & (uv <= hi + tol), axis=1))
    out = []
    for pid in cand:
        Q = arena.vertices[arena.polygons[pid]]
        d = np.roll(Q, -1, axis=0) - Q
        r = uv - Q
        cross = d[:, 0] * r[:, 1] - d[:, 1] * r[:, 0]
        if np.all(cross >= -tol * np.hypot(d[:, 0], d[:, 1])):
            out.append(int(pid))
    if not out:
        raise RuntimeError(f"no polygon contains {uv}")
    return np.array(out)


def scanline_regions(arena: PlaneArena, v: float) -> int:
    """Number of polygons met by the horizontal chord at height ``v``."""
    ids, indptr = arena.csr()
    y = arena.vertices[ids, 1]
    lo = np.minimum.reduceat(y, indptr[:-1])
    hi = np.maximum.reduceat(y, indptr[:-1])
    return int(np.sum((lo < v) & (hi > v)))

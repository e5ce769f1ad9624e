"""Pure numpy versions of the compiled kernels."""
from __future__ import annotations

import numpy as np


def poly_range(ids, indptr, gx, gy, h, X, Y):
    """Min and max of ``gx[p] * x + gy[p] * y + h[p]`` over the vertices of each polygon.

    Polygon ``p`` owns ``ids[indptr[p]:indptr[p + 1]]``; every polygon must be non-empty.
    """
    counts = np.diff(indptr)
    owner = np.repeat(np.arange(counts.size), counts)
    vals = gx[owner] * X[ids] + gy[owner] * Y[ids] + h[owner]
    starts = indptr[:-1]
    return np.minimum.reduceat(vals, starts), np.maximum.reduceat(vals, starts)


def _seg_dist2(px, py, ax, ay, bx, by):
    dx, dy = bx - ax, by - ay
    L2 = dx * dx + dy * dy
    with np.errstate(invalid="ignore", divide="ignore"):
        t = ((px - ax) * dx + (py - ay) * dy) / L2
    t = np.where(L2 > 0, np.clip(t, 0.0, 1.0), 0.0)
    ex = px - ax - t * dx
    ey = py - ay - t * dy
    return ex * ex + ey * ey


def tube_hits(px, py, ax, ay, bx, by, cell_ptr, cell_seg, x0, y0, cs, nx, ny, eps):
    """1 where a point lies within ``eps`` of some segment, else 0.

    Segments are bucketed into a uniform grid (``cell_ptr``/``cell_seg``, row
    major, ``nx`` columns) whose buckets already include the ``eps`` margin.
    """
    ix = np.clip(((px - x0) / cs).astype(np.int64), 0, nx - 1)
    iy = np.clip(((py - y0) / cs).astype(np.int64), 0, ny - 1)
    cell = iy * nx + ix
    out = np.zeros(px.size, dtype=np.uint8)
    eps2 = eps * eps
    order = np.argsort(cell, kind="stable")
    cells, first = np.unique(cell[order], return_index=True)
    bounds = np.append(first, order.size)
    for c, lo, hi in zip(cells, bounds[:-1], bounds[1:]):
        segs = cell_seg[cell_ptr[c]:cell_ptr[c + 1]]
        if segs.size == 0:
            continue
        pts = order[lo:hi]
        for chunk in np.array_split(pts, max(1, pts.size * segs.size // 2_000_000 + 1)):
            d2 = _seg_dist2(px[chunk, None], py[chunk, None], ax[None, segs], ay[None, segs],
                            bx[None, segs], by[None, segs])
            out[chunk] = (d2 <= eps2).any(axis=1)
    return out

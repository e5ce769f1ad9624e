# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled loops for the 2-D arena and the tube Monte-Carlo."""
import numpy as np
cimport numpy as cnp
from libc.math cimport floor

cnp.import_array()


def poly_range(const cnp.int64_t[::1] ids, const cnp.int64_t[::1] indptr,
               const double[::1] gx, const double[::1] gy, const double[::1] h,
               const double[::1] X, const double[::1] Y):
    cdef Py_ssize_t n = indptr.shape[0] - 1, p, k
    cdef double v, lo, hi, a, b, c
    cdef cnp.int64_t i
    vmin = np.empty(n)
    vmax = np.empty(n)
    cdef double[::1] mn = vmin, mx = vmax
    with nogil:
        for p in range(n):
            a = gx[p]; b = gy[p]; c = h[p]
            i = ids[indptr[p]]
            lo = a * X[i] + b * Y[i] + c
            hi = lo
            for k in range(indptr[p] + 1, indptr[p + 1]):
                i = ids[k]
                v = a * X[i] + b * Y[i] + c
                if v < lo:
                    lo = v
                elif v > hi:
                    hi = v
            mn[p] = lo
            mx[p] = hi
    return vmin, vmax


def tube_hits(const double[::1] px, const double[::1] py,
              const double[::1] ax, const double[::1] ay,
              const double[::1] bx, const double[::1] by,
              const cnp.int64_t[::1] cell_ptr, const cnp.int64_t[::1] cell_seg,
              double x0, double y0, double cs, Py_ssize_t nx, Py_ssize_t ny, double eps):
    cdef Py_ssize_t n = px.shape[0], i, k, ix, iy, c
    cdef cnp.int64_t s
    cdef double eps2 = eps * eps, dx, dy, L2, t, ex, ey
    out = np.zeros(n, dtype=np.uint8)
    cdef cnp.uint8_t[::1] o = out
    with nogil:
        for i in range(n):
            ix = <Py_ssize_t>floor((px[i] - x0) / cs)
            iy = <Py_ssize_t>floor((py[i] - y0) / cs)
            if ix < 0: ix = 0
            if ix >= nx: ix = nx - 1
            if iy < 0: iy = 0
            if iy >= ny: iy = ny - 1
            c = iy * nx + ix
            for k in range(cell_ptr[c], cell_ptr[c + 1]):
                s = cell_seg[k]
                dx = bx[s] - ax[s]
                dy = by[s] - ay[s]
                L2 = dx * dx + dy * dy
                t = 0.0
                if L2 > 0:
                    t = ((px[i] - ax[s]) * dx + (py[i] - ay[s]) * dy) / L2
                    if t < 0: t = 0.0
                    if t > 1: t = 1.0
                ex = px[i] - ax[s] - t * dx
                ey = py[i] - ay[s] - t * dy
                if ex * ex + ey * ey <= eps2:
                    o[i] = 1
                    break
    return out

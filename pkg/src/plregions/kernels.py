"""Hot loops, compiled when the extension is built.

Set ``PLREGIONS_PURE_PYTHON=1`` to force the numpy versions.
"""
from __future__ import annotations

import os

import numpy as np

from . import _fallback

BACKEND = "numpy"
_impl = _fallback
if os.environ.get("PLREGIONS_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]
        BACKEND = "cython"
    except ImportError:
        _impl = _fallback


def _resolve(impl):
    """``None`` for the import-time choice, ``"numpy"``/``"cython"`` by name, or a module."""
    if impl is None:
        return _impl
    if impl == "numpy":
        return _fallback
    if impl == "cython":
        from . import _kernels
        return _kernels
    return impl


def _f(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def _i(a):
    return np.ascontiguousarray(a, dtype=np.int64)


def poly_range(ids, indptr, gx, gy, h, X, Y, impl=None):
    """Per-polygon min and max of an affine function over a CSR vertex incidence."""
    impl = _resolve(impl)
    return impl.poly_range(_i(ids), _i(indptr), _f(gx), _f(gy), _f(h), _f(X), _f(Y))


def tube_hits(px, py, ax, ay, bx, by, cell_ptr, cell_seg, x0, y0, cs, nx, ny, eps, impl=None):
    """Flags points within ``eps`` of a bucketed segment set."""
    impl = _resolve(impl)
    return impl.tube_hits(_f(px), _f(py), _f(ax), _f(ay), _f(bx), _f(by), _i(cell_ptr),
                          _i(cell_seg), float(x0), float(y0), float(cs), int(nx), int(ny),
                          float(eps))

import numpy as np
import pytest
from hypothesis import given, strategies as st

from plregions import _fallback, kernels

compiled = pytest.mark.skipif(kernels.BACKEND != "cython", reason="extension not built")


def _csr(rng, F):
    lens = rng.integers(3, 8, size=F)
    indptr = np.concatenate([[0], np.cumsum(lens)])
    V = int(lens.sum())
    ids = rng.permutation(V)
    return ids, indptr, rng.standard_normal(V), rng.standard_normal(V)


@given(st.integers(0, 2 ** 31), st.integers(1, 50))
def test_poly_range_fallback_is_brute_force(seed, F):
    rng = np.random.default_rng(seed)
    ids, indptr, X, Y = _csr(rng, F)
    gx, gy, h = rng.standard_normal((3, F))
    lo, hi = kernels.poly_range(ids, indptr, gx, gy, h, X, Y, impl="numpy")
    for f in range(F):
        v = gx[f] * X[ids[indptr[f]:indptr[f + 1]]] + gy[f] * Y[ids[indptr[f]:indptr[f + 1]]] + h[f]
        assert lo[f] == v.min() and hi[f] == v.max()


@compiled
@given(st.integers(0, 2 ** 31), st.integers(1, 50))
def test_poly_range_backends_agree(seed, F):
    rng = np.random.default_rng(seed)
    ids, indptr, X, Y = _csr(rng, F)
    gx, gy, h = rng.standard_normal((3, F))
    a = kernels.poly_range(ids, indptr, gx, gy, h, X, Y, impl="numpy")
    b = kernels.poly_range(ids, indptr, gx, gy, h, X, Y, impl="cython")
    np.testing.assert_array_equal(a[0], b[0])
    np.testing.assert_array_equal(a[1], b[1])


def _tube_case(seed, n_seg=20, n_pts=500, eps=0.05):
    from plregions.theory import _bucket
    rng = np.random.default_rng(seed)
    A = rng.uniform(-1, 1, (n_seg, 2))
    B = rng.uniform(-1, 1, (n_seg, 2))
    segs = np.stack([A, B], axis=1)
    P = rng.uniform(-1, 1, (n_pts, 2))
    n = 8
    ptr, cseg = _bucket(segs, -1.0, -1.0, 2.0 / n, n, n, eps)
    args = (P[:, 0], P[:, 1], A[:, 0], A[:, 1], B[:, 0], B[:, 1], ptr, cseg, -1.0, -1.0,
            2.0 / n, n, n, eps)
    return P, A, B, eps, args


def _brute_hits(P, A, B, eps):
    d = B - A
    t = np.clip(np.einsum("pk,sk->ps", P, d) - np.sum(A * d, axis=1), 0, None) / np.sum(d * d, axis=1)
    t = np.clip(t, 0, 1)
    Q = A[None] + t[..., None] * d[None]
    return (np.linalg.norm(P[:, None] - Q, axis=2) <= eps).any(axis=1)


@given(st.integers(0, 2 ** 31))
def test_tube_hits_fallback_is_brute_force(seed):
    P, A, B, eps, args = _tube_case(seed)
    hits = kernels.tube_hits(*args, impl="numpy").astype(bool)
    np.testing.assert_array_equal(hits, _brute_hits(P, A, B, eps))


@compiled
@given(st.integers(0, 2 ** 31))
def test_tube_hits_backends_agree(seed):
    *_, args = _tube_case(seed)
    np.testing.assert_array_equal(kernels.tube_hits(*args, impl="numpy"),
                                  kernels.tube_hits(*args, impl="cython"))


def test_backend_is_reported():
    assert kernels.BACKEND in ("cython", "numpy")
    assert kernels._resolve("numpy") is _fallback

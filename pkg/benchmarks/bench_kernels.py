"""Time the compiled kernels against the numpy fallback on a real arena.

    python3 benchmarks/bench_kernels.py [--width 64] [--repeat 5]
"""
import argparse
import time

import numpy as np

from plregions import _fallback, kernels
from plregions.netgen import InitSpec, he_init
from plregions.region2d import SliceFrame, enumerate_plane
from plregions.theory import _bucket, tube_geometry


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t)
    return min(times), out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--width", type=int, default=64)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--points", type=int, default=100_000)
    args = ap.parse_args()

    net = he_init(InitSpec((2, args.width, args.width, args.width, 1), 1.0, seed=0))
    arena = enumerate_plane(net, SliceFrame.axis_aligned(2, 4.0))
    print(f"backend at import: {kernels.BACKEND}; arena with {arena.n_regions} polygons")

    ids, indptr = arena.csr()
    X, Y = arena.vertices[:, 0].copy(), arena.vertices[:, 1].copy()
    rng = np.random.default_rng(0)
    F = arena.n_regions
    gx, gy, h = rng.standard_normal(F), rng.standard_normal(F), rng.standard_normal(F)

    segs, _, _ = tube_geometry(arena)
    eps = 1e-2 * arena.side
    P = rng.uniform(-arena.frame.half, arena.frame.half, size=(args.points, 2))
    cs = max(eps, arena.side / 64)
    n = int(np.ceil(arena.side / cs))
    cell_ptr, cell_seg = _bucket(segs, -arena.frame.half, -arena.frame.half, cs, n, n, eps)
    tube_args = (P[:, 0], P[:, 1], segs[:, 0, 0], segs[:, 0, 1], segs[:, 1, 0], segs[:, 1, 1],
                 cell_ptr,
                 cell_seg, -arena.frame.half, -arena.frame.half, cs, n, n, eps)

    impls = ["numpy"] + (["cython"] if kernels.BACKEND == "cython" else [])
    results = {}
    for impl in impls:
        t1, r1 = best_of(lambda: kernels.poly_range(ids, indptr, gx, gy, h, X, Y, impl=impl),
                         args.repeat)
        t2, r2 = best_of(lambda: kernels.tube_hits(*tube_args, impl=impl), args.repeat)
        results[impl] = (r1, r2)
        print(f"{impl:>7}: poly_range {t1 * 1e3:8.2f} ms   tube_hits {t2 * 1e3:8.2f} ms")
    if len(results) == 2:
        a, b = results["numpy"], results["cython"]
        same = (np.array_equal(a[0][0], b[0][0]) and np.array_equal(a[0][1], b[0][1])
                and np.array_equal(a[1], b[1]))
        print(f"outputs identical: {same}")


if __name__ == "__main__":
    main()

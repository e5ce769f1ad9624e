"""Independent reference computations used by several test modules."""
import numpy as np

from plregions.network import patterns


def sampled_region_count(net, p0, p1, n_grid=20001, depth=50):
    """Regions on the segment ``p0 -> p1`` from dense sampling plus bisection.

    Uses only forward passes: consecutive samples with different activation
    patterns bracket one or more cuts, and bisection splits each bracket until
    every sub-bracket holds a single pattern change.
    """
    p0, p1 = np.asarray(p0, float), np.asarray(p1, float)
    t = np.linspace(0.0, 1.0, n_grid)
    P = patterns(net, p0 + t[:, None] * (p1 - p0))
    cuts = 0

    def pat(s):
        return patterns(net, (p0 + s * (p1 - p0))[None])[0]

    def refine(a, b, pa, pb, level):
        nonlocal cuts
        if level == depth:
            cuts += 1
            return
        m = 0.5 * (a + b)
        pm = pat(m)
        left, right = not np.array_equal(pa, pm), not np.array_equal(pm, pb)
        if left and right:
            refine(a, m, pa, pm, level + 1)
            refine(m, b, pm, pb, level + 1)
        elif left:
            refine(a, m, pa, pm, level + 1)
        else:
            refine(m, b, pm, pb, level + 1)

    diff = np.flatnonzero(np.any(P[1:] != P[:-1], axis=1))
    for i in diff:
        refine(t[i], t[i + 1], P[i], P[i + 1], 0)
    return cuts + 1

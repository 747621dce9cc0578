import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(0xC0FFEE)


def trapezoid_integral(fn, lo=-np.pi, hi=np.pi, n=200_001, breakpoints=()):
    """Dense trapezoid quadrature used as an independent normalization
    oracle for the circular densities.

    Piecewise densities (wedge-based) need their jump locations listed in
    `breakpoints`; each smooth piece is then integrated separately so the
    discontinuities cost no accuracy.
    """
    edges = sorted({lo, hi, *(b for b in breakpoints if lo < b < hi)})
    total = 0.0
    eps = 1e-12
    for a, b in zip(edges[:-1], edges[1:]):
        pts = max(int(n * (b - a) / (hi - lo)), 64)
        grid = np.linspace(a + eps, b - eps, pts)
        total += np.trapezoid(fn(grid), grid)
    return total


def wedge_breakpoints(sigma, offsets=(0.0,)):
    """Jump locations of a wedge density smeared to the given centers."""
    out = []
    for c in offsets:
        out.extend([c - sigma, c + sigma])
    return out

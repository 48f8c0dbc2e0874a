"""Shared test utilities: quadrature oracles and a local eigenvalue follower.

The oracles here are deliberately independent of the library's closed-form
paths: integrals are checked against composite Simpson on the raw integrand,
and eigenvalue derivatives against re-solving the determinant at shifted
parameters.
"""

import numpy as np
import pytest

from treig.bessel import bessel_j, bessel_y
from treig.nep import _internals_of


def simpson(f, a: float, b: float, n: int = 4000) -> complex:
    """Composite Simpson with n panels (n even)."""
    if n % 2:
        n += 1
    xs = np.linspace(a, b, n + 1)
    ys = np.array([f(x) for x in xs])
    w = np.ones(n + 1)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return (b - a) / (3.0 * n) * np.sum(w * ys)


def cyl(kind: str, m: int, z):
    return bessel_j(m, z) if kind == "J" else bessel_y(m, z)


def newton_eigenvalue(nep, kappa0: complex, p: float, steps: int = 60) -> complex:
    """Follow det L(., p) = 0 from the seed by Newton; the seed must already
    be close (used to evaluate eigenvalues at finitely shifted p)."""
    ints = _internals_of(nep)
    k = np.array([complex(kappa0)])
    for _ in range(steps):
        d, dd = ints.det_pair_batch(k, float(p))
        if dd[0] == 0:
            break
        step = d[0] / dd[0]
        k = k - step
        if abs(step) < 1e-15 * max(1.0, abs(k[0])):
            break
    return complex(k[0])


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20260818)

"""Independent reference computations shared by the tests."""

import numpy as np


def kkt_projection(x, a, c, lower, upper, iters=200):
    """Projection of ``x`` onto ``{z: a.z <= c}`` ∩ box via its KKT form.

    The solution is ``clip(x - lam * a)`` for the smallest ``lam >= 0`` with
    ``a.z(lam) <= c``; ``a.z(lam)`` is non-increasing so ``lam`` is bisected.
    """
    x, a = np.asarray(x, float), np.asarray(a, float)

    def z(lam):
        return np.clip(x - lam * a, lower, upper)

    if z(0.0) @ a <= c:
        return z(0.0)
    hi = 1.0
    while z(hi) @ a > c:
        hi *= 2.0
    lo = 0.0
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if z(mid) @ a > c:
            lo = mid
        else:
            hi = mid
    return z(hi)


def random_baseline(rng, q=None):
    """Random knots and non-increasing baseline survival values."""
    q = int(rng.integers(1, 40)) if q is None else q
    knots = np.concatenate(([0.0], np.cumsum(rng.uniform(0.05, 50.0, size=q + 1))))
    values = np.concatenate(([1.0], np.sort(rng.uniform(0.0, 1.0, size=q))[::-1]))
    return knots, values


def halfspace_projection(x, a, c):
    """Closed-form projection onto ``{z: a.z <= c}``."""
    return x - max(0.0, a @ x - c) / (a @ a) * a

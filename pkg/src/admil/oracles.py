"""Slow reference solutions for the robust bag likelihood.

These take routes independent of :mod:`admil.dro` and are only used for
verification:

* chi-square: the maximizer lies on the path ``proj_simplex(1/n + t f)``,
  ``t >= 0``; bisect on ``t`` until the path leaves the ball.
* KL: minimize the convex dual ``a log mean exp(f / a) + a lam / n`` over
  the temperature ``a > 0`` by golden-section search in ``log a``.
"""

import math

import numpy as np


def project_simplex(v):
    """Euclidean projection onto the probability simplex (sort-based)."""
    v = np.asarray(v, dtype=float)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    rho = np.nonzero(u - css / np.arange(1, v.size + 1) > 0)[0][-1]
    return np.maximum(v - css[rho] / (rho + 1), 0.0)


def chi2_oracle(f, lam, iters=200):
    f = np.asarray(f, dtype=float)
    n = f.size
    u = np.full(n, 1.0 / n)
    r2 = lam / n**2

    def dist2(t):
        d = project_simplex(u + t * f) - u
        return float(d @ d)

    hi = 1.0
    while dist2(hi) < r2 and hi < 1e12:
        hi *= 2.0
    # if the path never leaves the ball, its end (uniform on the argmax) wins
    lo = hi if dist2(hi) <= r2 else 0.0
    for _ in range(iters):
        if hi - lo <= 1e-15 * max(hi, 1.0):
            break
        mid = 0.5 * (lo + hi)
        if dist2(mid) <= r2:
            lo = mid
        else:
            hi = mid
    p = project_simplex(u + lo * f)
    return float(p @ f), p


def kl_oracle(f, lam, iters=300):
    f = np.asarray(f, dtype=float)
    n = f.size
    rho = lam / n
    top = f.max()

    def dual(log_a):
        a = math.exp(log_a)
        s = (f - top) / a
        return top + a * (math.log(np.mean(np.exp(s))) + rho)

    if rho == 0:
        return float(f.mean())
    lo, hi = -40.0, 40.0
    g = (math.sqrt(5) - 1) / 2
    x1, x2 = hi - g * (hi - lo), lo + g * (hi - lo)
    d1, d2 = dual(x1), dual(x2)
    for _ in range(iters):
        if d1 <= d2:
            hi, x2, d2 = x2, x1, d1
            x1 = hi - g * (hi - lo)
            d1 = dual(x1)
        else:
            lo, x1, d1 = x1, x2, d2
            x2 = lo + g * (hi - lo)
            d2 = dual(x2)
    # the dual tends to max(f) as a -> 0, which the bracket may not reach
    return float(min(d1, d2, top))

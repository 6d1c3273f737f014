"""Slow, independent reference implementations used as test oracles."""

from __future__ import annotations

import numpy as np


def bisect_cernn_root(d, n, lam, alpha, iters=400):
    """Positive root of ``lam a e^2 + n e - n d - lam (1 - a)`` by vectorized bisection.

    The root lies between ``d`` and the prior mode, so that interval brackets it.
    Iterates until the midpoint stops moving in floating point.
    """
    d, n, lam, alpha = np.broadcast_arrays(*(np.asarray(v, dtype=np.float64) for v in (d, n, lam, alpha)))
    mode = np.sqrt((1 - alpha) / alpha)
    lo, hi = np.minimum(d, mode), np.maximum(d, mode)

    def phi(e):
        return lam * alpha * e * e + n * e - n * d - lam * (1 - alpha)

    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if np.all((mid <= lo) | (mid >= hi)):
            break
        up = phi(mid) > 0
        hi = np.where(up, mid, hi)
        lo = np.where(up, lo, mid)
    return 0.5 * (lo + hi)


def cnr_grid_search(d, kappa, points=100_000):
    """Minimize ``h(tau)`` over a dense log grid on ``[d_min / kappa, d_max]``."""
    d = np.asarray(d, dtype=np.float64)
    taus = np.geomspace(d.min() / kappa, d.max(), points)
    best_h, best_tau = np.inf, None
    for chunk in np.array_split(taus, 50):
        e = np.clip(d[:, None], chunk, kappa * chunk)
        h = np.sum(np.log(e) + d[:, None] / e, axis=0)
        i = int(np.argmin(h))
        if h[i] < best_h:
            best_h, best_tau = h[i], chunk[i]
    return best_tau, best_h


def cnr_objective(d, tau, kappa):
    e = np.clip(d, tau, kappa * tau)
    return float(np.sum(np.log(e) + d / e))

"""
Measurements that do not trust the construction: divided differences,
sampled comonotonicity margins, sup-norm errors and log-log rate fits.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

__all__ = [
    "RateFit",
    "divided_difference",
    "comonotonicity_margin",
    "sup_error",
    "fit_rate",
]

TWO_PI = 2.0 * np.pi


def divided_difference(nodes, values):
    """
    Classical divided difference ``[t_0, ..., t_k; g]``.

    Examples
    --------
    >>> divided_difference([0.0, 1.0, 2.0], [0.0, 1.0, 4.0])
    1.0
    """
    t = np.asarray(nodes, dtype=float).ravel()
    v = np.asarray(values, dtype=float).ravel().copy()
    if t.size != v.size:
        raise ValueError("nodes and values must have equal length")
    if t.size == 0:
        raise ValueError("need at least one node")
    if np.unique(t).size != t.size:
        raise ValueError("nodes must be pairwise distinct")
    # sorting does not change the value and keeps the recursion well conditioned
    order = np.argsort(t)
    t, v = t[order], v[order]
    for k in range(1, t.size):
        v[k:] = (v[k:] - v[k - 1 : -1]) / (t[k:] - t[: t.size - k])
    return float(v[-1])


def comonotonicity_margin(tau, Pi, grid_points):
    """
    ``min tau'(x) Pi(x) / max |tau'(x) Pi(x)|`` over an equispaced grid.

    The normalizer is the grid maximum refined by a local search, so it does
    not depend on the grid and the margin can only drop on a finer grid.
    Returns 0 when the product vanishes identically (for a constant
    ``tau``).  A value of ``-1`` means the product is nowhere positive.
    """
    dtau = tau.derivative()
    N = max(int(grid_points), 2 * dtau.degree + 1, 2 * Pi.degree + 1)
    v = dtau.eval_uniform(N) * Pi.eval_uniform(N)
    absv = np.abs(v)
    k = int(np.argmax(absv))
    scale = float(absv[k])
    if scale == 0.0:
        return 0.0
    x0 = -np.pi + TWO_PI * k / N
    h = TWO_PI / N
    res = minimize_scalar(
        lambda t: -abs(float(dtau(t)) * float(Pi(t))),
        bounds=(x0 - h, x0 + h),
        method="bounded",
        options={"xatol": h * 1e-8},
    )
    scale = max(scale, float(-res.fun))
    return float(v.min() / scale)


def sup_error(f, tau, grid_points):
    """
    ``max |f - tau|`` on an equispaced grid, refined near the grid maximizer.

    A bounded golden-section search on the two grid cells around the worst
    sample recovers the part of the peak that falls between grid points.
    """
    N = max(int(grid_points), 2 * tau.degree + 1)
    x = -np.pi + TWO_PI * np.arange(N) / N
    err = np.abs(np.asarray(f(x), dtype=float) - tau.eval_uniform(N))
    k = int(np.argmax(err))
    best = float(err[k])
    h = TWO_PI / N
    res = minimize_scalar(
        lambda t: -abs(float(f(t)) - float(tau(t))),
        bounds=(x[k] - h, x[k] + h),
        method="bounded",
        options={"xatol": h * 1e-6},
    )
    return max(best, float(-res.fun))


@dataclass(frozen=True)
class RateFit:
    n_values: list
    errors: list
    slope: float
    intercept: float
    r_squared: float

    def predict(self, n):
        return np.exp(self.intercept) * np.asarray(n, dtype=float) ** self.slope


def fit_rate(n_values, errors):
    """
    Least-squares line through ``(log n, log error)``.

    Examples
    --------
    >>> round(fit_rate([1, 2, 4], [1, 1 / 8, 1 / 64]).slope, 12)
    -3.0
    """
    n = np.asarray(n_values, dtype=float)
    e = np.asarray(errors, dtype=float)
    if n.size != e.size:
        raise ValueError("n_values and errors must have equal length")
    if n.size < 3:
        raise ValueError("need at least three points")
    if np.any(e <= 0) or np.any(n <= 0):
        raise ValueError("errors and n must be positive")
    lx, ly = np.log(n), np.log(e)
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    ss_tot = float(((ly - ly.mean()) ** 2).sum())
    r2 = 1.0 if ss_tot == 0.0 else max(0.0, 1.0 - float((resid**2).sum()) / ss_tot)
    return RateFit(list(map(float, n)), list(map(float, e)), float(slope), float(intercept), r2)

"""
Split ``f = G1 + G2`` into a small, shape-preserving part ``G1`` (the
antiderivative of the truncated derivative ``g1``) and the remainder
``G2`` whose derivative vanishes where ``f'`` is small.
"""

from __future__ import annotations

from functools import cache, lru_cache

import numpy as np
from numpy.polynomial import Polynomial

from .partition import PartitionState

__all__ = ["bump_poly", "bump_S", "SplitFunctions", "build_g1", "build_split"]

TWO_PI = 2.0 * np.pi
_GL_X, _GL_W = np.polynomial.legendre.leggauss(16)

# g1 interval codes
ZERO, FULL, RISE, FALL = 0, 1, 2, 3


@cache
def bump_poly(r):
    """
    ``S(u) = int_0^u t^m (1-t)^m dt / B`` with ``m = r - 2``, as a polynomial in ``u``.

    ``S(0) = 0``, ``S(1) = 1`` and the first ``r - 2`` derivatives vanish at
    both ends.
    """
    if r < 2:
        raise ValueError("r must be at least 2")
    m = r - 2
    integrand = Polynomial([0, 1]) ** m * Polynomial([1, -1]) ** m
    S = integrand.integ()
    return S / S(1.0)


def bump_S(j, grid, r, x):
    """The smooth ramp on ``I_j`` rising from 0 at ``x_j`` to 1 at ``x_{j-1}``."""
    x = np.asarray(x, dtype=float)
    a, b = grid.interval(j)
    tol = 1e-12 * max(1.0, abs(a), abs(b))
    if np.any((x < a - tol) | (x > b + tol)):
        raise ValueError(f"x outside I_{j} = [{a}, {b}]")
    u = np.clip((x - a) / grid.h, 0.0, 1.0)
    out = bump_poly(r)(u)
    return float(out) if out.ndim == 0 else out


class SplitFunctions:
    """
    ``g1``, ``G1``, ``G2`` and the periodic part of ``G2`` for one partition.

    ``g1 = f'`` on ``M*``, ``0`` off ``M**`` and a smooth ramp ``f' S_j`` or
    ``f' (1 - S_j)`` on the intervals in between.  ``G1(x) = f(0) + int_0^x g1``
    is integrated exactly per interval with Gauss-Legendre quadrature, and
    ``G1(x) = B x + periodic``.
    """

    def __init__(self, f, fprime, partition: PartitionState):
        self.f = f
        self.fprime = fprime
        self.partition = partition
        self.grid = partition.grid
        self.r = partition.r
        self.codes, self.orientation_conflicts = _interval_codes(partition)
        self._S = bump_poly(self.r)
        self._grid_values()

    # -- g1 -----------------------------------------------------------------

    def _g1_at(self, p, x):
        """g1 at ``x`` known to lie in the interval at window position ``p``."""
        g = self.grid
        j = p - g.n + 1
        code = self.codes[p]
        # shift x into the window copy of its interval
        xj = g.x(j)
        u = np.clip((x - xj) / g.h, 0.0, 1.0)
        fp = np.asarray(self.fprime(x), dtype=float)
        factor = np.where(
            code == FULL,
            1.0,
            np.where(code == RISE, self._S(u), np.where(code == FALL, 1.0 - self._S(u), 0.0)),
        )
        return fp * factor

    def _locate(self, x):
        """Window position of the interval holding ``x`` (after reduction to ``[-pi, pi)``)."""
        g = self.grid
        # reduce only points outside the window so in-window samples stay bit-exact
        inside = (x >= -np.pi) & (x < np.pi)
        x0 = np.where(inside, x, (x + np.pi) % TWO_PI - np.pi)
        j = g.index_of(x0)
        j = np.where(j > g.n, g.n, j)
        return x0, g.pos(j)

    def g1(self, x):
        x = np.asarray(x, dtype=float)
        x0, p = self._locate(x)
        shift = x - x0
        # evaluate inside the window copy, then f' is periodic so values agree
        out = self._g1_at(p, x0 + 0.0 * shift)
        return float(out) if out.ndim == 0 else out

    # -- G1 -----------------------------------------------------------------

    def _interval_integral(self, p, a, b):
        half = 0.5 * (b - a)
        mid = 0.5 * (b + a)
        nodes = mid[..., None] + half[..., None] * _GL_X
        vals = self._g1_at(p[..., None], nodes)
        return (vals * _GL_W).sum(axis=-1) * half

    def _grid_values(self):
        g = self.grid
        pos = np.arange(g.size)
        j = pos - g.n + 1
        a = g.x(j).astype(float)
        b = g.x(j - 1).astype(float)
        A = self._interval_integral(pos, a, b)
        self.interval_integrals = A
        self.B = float(A.sum() / TWO_PI)
        f0 = float(self.f(0.0))
        # G1(x_j) for j = -n .. n, anchored at x_0 = 0
        js = np.arange(-g.n, g.n + 1)
        vals = np.empty(js.size)
        for k, jj in enumerate(js):
            if jj >= 1:
                vals[k] = f0 - A[g.pos(np.arange(1, jj + 1))].sum()
            elif jj <= -1:
                vals[k] = f0 + A[g.pos(np.arange(jj + 1, 1))].sum()
            else:
                vals[k] = f0
        self.grid_index = js
        self.grid_G1 = vals

    def G1_at_grid(self, j):
        """``G1(x_j)`` for ``-n <= j <= n``."""
        return self.grid_G1[np.asarray(j) + self.grid.n]

    def G1(self, x):
        x = np.asarray(x, dtype=float)
        x0, p = self._locate(x)
        periods = np.round((x - x0) / TWO_PI)
        j = p - self.grid.n + 1
        base = self.G1_at_grid(j)
        xj = self.grid.x(j)
        out = base + self._interval_integral(p, xj, x0) + TWO_PI * self.B * periods
        return float(out) if out.ndim == 0 else out

    def G2(self, x):
        return self.f(x) - self.G1(x)

    def tildeG2(self, x):
        x = np.asarray(x, dtype=float)
        return self.G2(x) + self.B * x

    def g2(self, x):
        return np.asarray(self.fprime(x), dtype=float) - self.g1(x)


def _interval_codes(partition):
    st = partition
    N = st.grid.size
    codes = np.full(N, ZERO, dtype=int)
    codes[st.M1] = FULL
    conflicts = []
    trans = np.flatnonzero(st.M2 & ~st.M1)
    for p in trans:
        # position p+2 is index j+2, the interval two steps to the left
        left2_in_omega = st.Omega[(p + 2) % N]
        codes[p] = FALL if left2_in_omega else RISE
        # the ramp must reach f' on the side that touches M*
        left_in_M1 = st.M1[(p + 1) % N]
        right_in_M1 = st.M1[(p - 1) % N]
        if (codes[p] == FALL) != left_in_M1 or left_in_M1 == right_in_M1:
            conflicts.append(int(p - st.grid.n + 1))
    return codes, conflicts


def build_g1(f, fprime, partition):
    """The truncated derivative ``g1`` as a vectorized callable."""
    return SplitFunctions(f, fprime, partition).g1


def build_split(f, fprime, partition):
    return SplitFunctions(f, fprime, partition)

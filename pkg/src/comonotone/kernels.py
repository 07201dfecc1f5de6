"""
Jackson-type kernels ``J_{l,n}(t) = (sin(nt/2) / sin(t/2))^{2l} / gamma_{l,n}``.

The kernel is an even, nonnegative trigonometric polynomial of degree
``l(n-1)`` with unit integral over a period.  Its normalizer and the
moment constants that bound its tails are computed numerically here;
nothing about their size is assumed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cache, lru_cache

import numpy as np

from .trigpoly import TrigPoly

__all__ = [
    "KernelSpec",
    "KernelConstants",
    "gamma",
    "make_kernel",
    "jackson_eval",
    "jackson_poly",
    "moment",
    "symmetric_moment",
    "estimate_constants",
]

# |sin(t/2)| below this switches to the t -> 2 pi k limit value
_SINGULAR_TOL = 1e-8
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(12)


def _quadrature_points(l, n):
    return max(4096, 8 * l * n)


def _power_ratio(l, n, t):
    t = np.asarray(t, dtype=float)
    s = np.sin(0.5 * t)
    near = np.abs(s) < _SINGULAR_TOL
    safe = np.where(near, 1.0, s)
    ratio = np.sin(0.5 * n * t) / safe
    # the limit of sin(nt/2)/sin(t/2) at t = 2 pi k is n (-1)^{k(n-1)}; only its even power enters
    return np.where(near, float(n) ** (2 * l), ratio ** (2 * l))


@cache
def gamma(l, n):
    """
    ``int_{-pi}^{pi} (sin(nt/2) / sin(t/2))^{2l} dt`` by the periodic trapezoid rule.

    The integrand is a trigonometric polynomial of degree ``l(n-1)``, so the
    rule is exact once the grid has more than ``2 l (n-1)`` points.
    """
    if l < 1 or n < 1:
        raise ValueError("l and n must be positive")
    N = _quadrature_points(l, n)
    t = -np.pi + 2.0 * np.pi * np.arange(N) / N
    # scale out n^{2l} before summing to keep magnitudes near one
    vals = _power_ratio(l, n, t) / float(n) ** (2 * l)
    return float(vals.sum() * (2.0 * np.pi / N)) * float(n) ** (2 * l)


@dataclass(frozen=True)
class KernelSpec:
    l: int
    n: int
    gamma: float

    def __post_init__(self):
        if self.l < 1 or self.n < 1:
            raise ValueError("l and n must be positive")
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")

    @property
    def degree(self):
        return self.l * (self.n - 1)


def make_kernel(l, n):
    return KernelSpec(l, n, gamma(l, n))


def jackson_eval(spec, t):
    """Pointwise kernel value, with the limit ``n^{2l} / gamma`` at ``t = 2 pi k``."""
    return _power_ratio(spec.l, spec.n, t) / spec.gamma


@lru_cache(maxsize=64)
def _raw_coefficients(l, n):
    # (sin(nt/2)/sin(t/2))^2 = sum_{|k|<n} (n - |k|) e^{ikt}; raise to the l-th power
    tri = (n - np.abs(np.arange(-(n - 1), n))).astype(float) / n
    c = np.ones(1)
    for _ in range(l):
        c = np.convolve(c, tri)
    c *= float(n) ** l
    c.setflags(write=False)
    return c


@lru_cache(maxsize=64)
def _jackson_poly_cached(l, n):
    spec = make_kernel(l, n)
    c = _raw_coefficients(l, n) / spec.gamma
    return TrigPoly.from_two_sided(c)


def jackson_poly(spec):
    """The kernel as a :class:`TrigPoly` of degree exactly ``l(n-1)``."""
    return _jackson_poly_cached(spec.l, spec.n)


def _composite_gauss(func, a, b, panels):
    edges = np.linspace(a, b, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    x = mid[:, None] + half[:, None] * _GL_NODES[None, :]
    return float((func(x) * _GL_WEIGHTS[None, :] * half[:, None]).sum())


def moment(spec, nu, delta=0.0):
    """``int_delta^pi (1 + n t)^nu J_{l,n}(t) dt``, ``0 <= nu <= 2l - 2``."""
    if not 0 <= nu <= 2 * spec.l - 2:
        raise ValueError(f"nu must lie in [0, {2 * spec.l - 2}], got {nu}")
    if delta >= np.pi:
        return 0.0
    # panels finer than the kernel's oscillation width 2 pi / n
    panels = max(64, 4 * spec.n * spec.l)
    n = spec.n
    return _composite_gauss(lambda t: (1.0 + n * t) ** nu * jackson_eval(spec, t), delta, np.pi, panels)


def symmetric_moment(spec, nu):
    """``int_{-pi}^{pi} (1 + n|t|)^nu J_{l,n}(t) dt``; equals twice the one-sided moment."""
    return 2.0 * moment(spec, nu, 0.0)


@dataclass
class KernelConstants:
    """Numerical estimates of the kernel constants over an ``n`` range."""

    l: int
    n_range: tuple
    C9: float
    C10: float
    C11: dict = field(default_factory=dict)
    C12: float = 0.0
    C12_by_nu: dict = field(default_factory=dict)

    def as_dict(self):
        return {
            "l": self.l,
            "n_range": list(self.n_range),
            "C9": self.C9,
            "C10": self.C10,
            "C11": {str(k): v for k, v in self.C11.items()},
            "C12": self.C12,
            "C12_by_nu": {str(k): v for k, v in self.C12_by_nu.items()},
        }


@cache
def estimate_constants(l, n_range=(8, 16, 32, 64), n_delta=48):
    """
    Estimate the normalizer bounds and moment constants of ``J_{l,n}``.

    ``C10`` and ``C9`` bound ``gamma / n^{2l-1}`` from above and below,
    ``C12`` bounds every symmetric moment of order ``nu <= 2l-2`` and
    ``C11[nu]`` bounds ``moment(nu, delta) (1 + n delta)^{2l-nu-1}`` over a
    geometric grid of ``delta`` in ``(0, pi]`` (plus ``delta = 0``).
    """
    n_range = tuple(sorted(set(int(n) for n in n_range)))
    if not n_range:
        raise ValueError("n_range is empty")
    ratios = np.array([gamma(l, n) / float(n) ** (2 * l - 1) for n in n_range])
    C10 = float(ratios.max())
    C9 = float((1.0 / ratios).max())
    C12_by_nu = {}
    C11 = {}
    for nu in range(2 * l - 1):
        sym = []
        tail = []
        for n in n_range:
            spec = make_kernel(l, n)
            sym.append(symmetric_moment(spec, nu))
            deltas = np.concatenate([[0.0], np.geomspace(0.1 / n, np.pi, n_delta)])
            for d in deltas:
                tail.append(moment(spec, nu, d) * (1.0 + n * d) ** (2 * l - nu - 1))
        C12_by_nu[nu] = float(max(sym))
        C11[nu] = float(max(tail))
    return KernelConstants(
        l=l,
        n_range=n_range,
        C9=C9,
        C10=C10,
        C11=C11,
        C12=max(C12_by_nu.values()),
        C12_by_nu=C12_by_nu,
    )

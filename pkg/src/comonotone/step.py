"""
Smooth comonotone surrogates of the unit step.

``T(x) = (1/d) int_{x*-pi}^{x} J_{l,n}(t - x*) Pi(t) / Pi(x*) dt`` is built
exactly: the integrand is a trigonometric polynomial, so the integral is a
linear term plus a trigonometric polynomial, with no quadrature involved.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kernels import jackson_eval, jackson_poly, make_kernel
from .trigpoly import BreakpointSet, LinearPlusTrig, make_pi

__all__ = [
    "StepApproximant",
    "DegenerateCenter",
    "chi",
    "delta_n",
    "admissible",
    "build_step",
    "step_sup_error",
    "step_decay_bands",
]

TWO_PI = 2.0 * np.pi


class DegenerateCenter(ValueError):
    """The step center sits (numerically) on a zero of the sign polynomial."""


def chi(x, x_star):
    """Unit step: 0 for ``x <= x_star``, 1 beyond."""
    out = (np.asarray(x) > x_star).astype(float)
    return float(out) if out.ndim == 0 else out


def delta_n(n, x, x_star):
    """Decay weight ``min(1, 1 / (n |sin((x - x*)/2)|))``; 2 pi periodic in ``x``."""
    s = np.abs(np.sin(0.5 * (np.asarray(x, dtype=float) - x_star)))
    with np.errstate(divide="ignore"):
        out = np.minimum(1.0, 1.0 / (n * s))
    return float(out) if out.ndim == 0 else out


def admissible(x_star, Y, n, C12_max):
    """True when ``x*`` keeps distance ``>= 2 s C12 pi / n`` from every breakpoint image."""
    return bool(Y.distance(x_star) >= 2 * Y.s * C12_max * np.pi / n)


@dataclass(frozen=True, eq=False)
class StepApproximant:
    value: LinearPlusTrig
    x_star: float
    d: float
    l: int
    n: int
    s: int
    Y: BreakpointSet
    pi_center: float

    def __call__(self, x):
        return self.value(x)

    @property
    def degree(self):
        return self.value.degree

    def derivative(self):
        return self.value.derivative()

    def derivative_closed(self, x, pi_poly=None):
        """``J(x - x*) Pi(x) / (d Pi(x*))`` from the closed-form kernel."""
        pi_poly = pi_poly or make_pi(self.Y)
        spec = make_kernel(self.l, self.n)
        return jackson_eval(spec, np.asarray(x) - self.x_star) * pi_poly(x) / (self.d * self.pi_center)


def build_step(l, n, x_star, Y, pi_poly=None, rel_tol=1e-12):
    """
    Integrated step approximant centered at ``x_star``.

    The constant of integration makes ``T(x* - pi) = 0``; dividing by the
    full-period increment ``d`` makes ``T(x* + pi) = 1`` and the slope
    ``1 / (2 pi)``.
    """
    if pi_poly is None:
        pi_poly = make_pi(Y)
    pc = pi_poly(x_star)
    scale = max(pi_poly.coefficient_norm(), 1e-300)
    if abs(pc) <= rel_tol * scale:
        raise DegenerateCenter(f"Pi({x_star!r}) = {pc:.3e} is numerically zero")
    kernel = jackson_poly(make_kernel(l, n)).shift(x_star)
    integrand = kernel.multiply(pi_poly) * (1.0 / pc)
    split = integrand.antiderivative_split()
    d = TWO_PI * split.slope
    if not d > 0:
        raise DegenerateCenter(f"normalizer d = {d:.3e} is not positive at x* = {x_star!r}")
    left = split(x_star - np.pi)
    periodic = (split.periodic - left) * (1.0 / d)
    value = LinearPlusTrig(split.slope / d, periodic)
    return StepApproximant(value, float(x_star), float(d), l, n, Y.s, Y, float(pc))


def step_decay_bands(T, samples=20001, min_delta=None):
    """
    Sup of ``|chi - T|`` over dyadic bands of ``delta_n`` around ``x*``.

    Returns ``(band_delta, band_sup)`` arrays; ``band_delta`` is the upper
    edge of each band.  Samples cover ``[x* - pi, x* + pi]``.
    """
    x = T.x_star + np.linspace(-np.pi, np.pi, samples)
    err = np.abs(chi(x, T.x_star) - T(x))
    dl = delta_n(T.n, x, T.x_star)
    min_delta = min_delta or 1.0 / T.n
    edges = [1.0]
    while edges[-1] / 2 >= min_delta:
        edges.append(edges[-1] / 2)
    band_delta, band_sup = [], []
    for hi, lo in zip(edges[:-1], edges[1:]):
        mask = (dl <= hi) & (dl > lo)
        if mask.any():
            band_delta.append(hi)
            band_sup.append(err[mask].max())
    return np.array(band_delta), np.array(band_sup)


def step_sup_error(T, samples=20001):
    """
    Fitted log-log decay exponent of ``sup |chi - T|`` against ``delta_n``.

    Larger is faster decay; the theory bounds the error by a multiple of
    ``delta_n^{2(l-s)-1}``.
    """
    bd, bs = step_decay_bands(T, samples)
    keep = bs > 0
    slope, _ = np.polyfit(np.log(bd[keep]), np.log(bs[keep]), 1)
    return float(slope)

"""
Test functions with known sign pattern, each a member of the comonotone
class for its breakpoints.

Every entry is a trigonometric polynomial, so ``f`` and ``f'`` are closed
form and the derivative norms that fix ``r_max`` are exact coefficient sums
bounded by sampling.
"""

from __future__ import annotations

from collections.abc import Callable
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from .trigpoly import BreakpointSet, TrigPoly, make_pi

__all__ = ["CorpusEntry", "MembershipError", "corpus", "get_entry", "check_membership"]

TWO_PI = 2.0 * np.pi
MEMBERSHIP_SAMPLES = 10_000
HALF_PI = 0.5 * np.pi


class MembershipError(ValueError):
    """A corpus function violates ``f' Pi >= 0`` or periodicity."""


@dataclass(frozen=True)
class CorpusEntry:
    """
    One corpus function.

    Attributes
    ----------
    id : str
        Corpus key.
    f, fprime : callable
        Vectorized closed-form evaluators.
    Y : BreakpointSet
        Default breakpoints.
    r_max : int
        Largest ``r`` with ``max_x |f^(k)(x)| <= 1`` for ``1 <= k <= r``.
    scale : float
        Factor already applied to the underlying polynomial.
    poly : TrigPoly
        ``f`` itself, for exact derivatives.
    """

    id: str
    f: Callable
    fprime: Callable
    Y: BreakpointSet
    r_max: int
    scale: float
    poly: TrigPoly
    description: str = ""

    def with_breakpoints(self, points):
        return CorpusEntry(
            self.id, self.f, self.fprime, BreakpointSet(points), self.r_max, self.scale, self.poly, self.description
        )


def _sup(p, samples=4096):
    """``max |p|``: the sampled maximum refined by a bounded search around each local peak."""
    N = max(samples, 8 * p.degree + 8)
    v = np.abs(p.eval_uniform(N))
    h = TWO_PI / N
    peaks = np.flatnonzero((v >= np.roll(v, 1)) & (v >= np.roll(v, -1)) & (v >= 0.5 * v.max()))
    best = float(v.max())
    for k in peaks:
        x0 = -np.pi + h * k
        res = minimize_scalar(
            lambda t: -abs(float(p(t))), bounds=(x0 - h, x0 + h), method="bounded", options={"xatol": 1e-12}
        )
        best = max(best, float(-res.fun))
    return best


def _r_max(p, cap=8):
    """Largest ``r <= cap`` with every derivative up to order ``r`` bounded by 1 (with sampling slack)."""
    r = 0
    for k in range(1, cap + 1):
        if _sup(p.derivative(k)) > 1.0 + 1e-12:
            break
        r = k
    return r


def _scaled(p, r_target):
    """Scale so that derivatives of order ``1..r_target`` are bounded by 1."""
    worst = max(_sup(p.derivative(k)) for k in range(1, r_target + 1))
    scale = 1.0 if worst <= 1.0 else 1.0 / worst
    return p * scale, scale


def _entry(id_, p, Y, scale, description, r_max=None):
    dp = p.derivative()
    return CorpusEntry(
        id=id_,
        f=p.eval,
        fprime=dp.eval,
        Y=Y,
        r_max=_r_max(p) if r_max is None else r_max,
        scale=scale,
        poly=p,
        description=description,
    )


def _two_pair():
    Y = BreakpointSet([2.0, 0.5, -1.0, -2.0])
    Pi = make_pi(Y)
    # q = 1 + sum_{k<=2} a_k cos kx + b_k sin kx, minimum-norm coefficients with mean(Pi q) = 0
    v = np.concatenate([Pi.a[:2], Pi.b[:2]])
    w = -2.0 * Pi.a0 * v / (v @ v)
    q = TrigPoly(1.0, w[:2], w[2:])
    if q.eval_uniform(MEMBERSHIP_SAMPLES).min() <= 0.0:
        raise MembershipError("two_pair: zero-mean correction makes q non-positive")
    fp = Pi.multiply(q)
    split = fp.antiderivative_split()
    if abs(split.slope) > 1e-14:
        raise MembershipError("two_pair: derivative has nonzero mean")
    p, scale = _scaled(split.periodic, 3)
    return _entry("two_pair", p, Y, scale, "f' = Pi q with a positive second-order q", r_max=3)


def _build():
    Yneg = BreakpointSet([HALF_PI, -HALF_PI])
    const = TrigPoly.constant(0.3)
    neg_sin = TrigPoly.sin(1, -1.0)
    # f' = -cos x (1 + sin(2x) / 2) = -cos x - sin(x)/4 - sin(3x)/4
    warped_raw = TrigPoly(0.0, [0.25, 0.0, 1.0 / 12.0], [-1.0, 0.0, 0.0])
    warped, wscale = _scaled(warped_raw, 3)
    entries = [
        _entry("const", const, Yneg, 1.0, "f = 0.3", r_max=8),
        _entry("neg_sin", neg_sin, Yneg, 1.0, "f = -sin x", r_max=8),
        _entry("neg_sin_warped", warped, Yneg, wscale, "f' = -cos x (1 + sin(2x)/2), scaled", r_max=3),
        _two_pair(),
    ]
    for e in entries:
        check_membership(e)
    return entries


def check_membership(entry, samples=MEMBERSHIP_SAMPLES):
    """
    Sampled ``f' Pi >= 0`` and periodicity check.

    Raises
    ------
    MembershipError
        On a sign violation beyond rounding or a non-periodic ``f``.
    """
    x = -np.pi + TWO_PI * np.arange(samples) / samples
    Pi = make_pi(entry.Y)
    prod = np.asarray(entry.fprime(x)) * Pi(x)
    scale = max(float(np.abs(prod).max()), 1e-300)
    if prod.min() < -1e-12 * scale:
        raise MembershipError(f"{entry.id}: f' Pi < 0 at x = {x[np.argmin(prod)]:.6f}")
    gap = abs(float(entry.f(np.pi)) - float(entry.f(-np.pi)))
    if gap > 1e-12:
        raise MembershipError(f"{entry.id}: f is not 2pi-periodic (gap {gap:.3e})")


_CORPUS = None


def corpus():
    """All corpus entries, each verified on first use."""
    global _CORPUS
    if _CORPUS is None:
        _CORPUS = _build()
    return list(_CORPUS)


def get_entry(id_):
    for e in corpus():
        if e.id == id_:
            return e
    raise KeyError(f"unknown corpus id {id_!r}; choose from {[e.id for e in corpus()]}")

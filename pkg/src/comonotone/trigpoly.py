"""
Real trigonometric polynomials of fixed degree.

A polynomial of degree ``D`` is stored as ``a0 + sum_k a[k-1] cos(kx) + b[k-1] sin(kx)``
for ``k = 1..D``.  The degree is part of the value: it is carried by the
length of the coefficient arrays and never inferred from their magnitude.

Internally most arithmetic goes through the one-sided complex spectrum
``w_0 = a0, w_k = a_k - i b_k`` so that ``p(x) = Re sum_k w_k e^{ikx}``.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb

import numpy as np
from scipy.signal import fftconvolve

__all__ = [
    "TrigPoly",
    "LinearPlusTrig",
    "BreakpointSet",
    "make_pi",
]

TWO_PI = 2.0 * np.pi

# direct convolution below this size, FFT convolution above
_FFT_CONV_MIN = 20000
_DIRECT_EVAL_MAX = 1 << 21


def _as_float_array(v, n=None):
    arr = np.array(v, dtype=float).ravel()
    if n is not None and arr.size != n:
        raise ValueError(f"expected {n} coefficients, got {arr.size}")
    return arr


@dataclass(frozen=True, eq=False)
class TrigPoly:
    """Trigonometric polynomial ``a0 + sum a_k cos kx + b_k sin kx``."""

    a0: float
    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        a = _as_float_array(self.a)
        b = _as_float_array(self.b)
        if a.size != b.size:
            raise ValueError("cos and sin coefficient lists must have equal length")
        a.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "a0", float(self.a0))
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    # -- construction -----------------------------------------------------

    @classmethod
    def zero(cls, degree=0):
        return cls(0.0, np.zeros(degree), np.zeros(degree))

    @classmethod
    def constant(cls, c, degree=0):
        return cls(c, np.zeros(degree), np.zeros(degree))

    @classmethod
    def cos(cls, k, coeff=1.0):
        a = np.zeros(k)
        a[k - 1] = coeff
        return cls(0.0, a, np.zeros(k))

    @classmethod
    def sin(cls, k, coeff=1.0):
        b = np.zeros(k)
        b[k - 1] = coeff
        return cls(0.0, np.zeros(k), b)

    @classmethod
    def from_spectrum(cls, w):
        """Build from the one-sided complex spectrum ``w_0..w_D``."""
        w = np.asarray(w, dtype=complex)
        return cls(w[0].real, w[1:].real, -w[1:].imag)

    @classmethod
    def from_samples(cls, values, degree=None):
        """
        Recover a polynomial from equispaced samples on ``[-pi, pi)``.

        Sample ``m`` is taken at ``x_m = -pi + 2 pi m / N``.  With
        ``degree=None`` the largest degree resolvable by ``N`` samples,
        ``(N - 1) // 2``, is used.  The coefficients follow from discrete
        orthogonality; they are exact (to rounding) whenever the sampled
        function is itself a polynomial of degree ``<= degree``.
        """
        values = np.asarray(values, dtype=float).ravel()
        N = values.size
        max_degree = (N - 1) // 2
        if degree is None:
            degree = max_degree
        if degree > max_degree:
            raise ValueError(
                f"{N} samples resolve degree <= {max_degree}, requested {degree}"
            )
        spec = np.fft.rfft(values)[: degree + 1] / N
        # samples start at -pi, so undo the phase e^{-ik pi} = (-1)^k
        k = np.arange(degree + 1)
        w = spec * np.where(k % 2 == 0, 1.0, -1.0)
        w[1:] *= 2.0
        return cls.from_spectrum(w)

    # -- basic accessors --------------------------------------------------

    @property
    def degree(self):
        return self.a.size

    def spectrum(self):
        """One-sided complex spectrum ``w_k`` with ``p(x) = Re sum w_k e^{ikx}``."""
        w = np.empty(self.degree + 1, dtype=complex)
        w[0] = self.a0
        w[1:] = self.a - 1j * self.b
        return w

    def two_sided(self):
        """Coefficients ``c_{-D}..c_D`` of ``sum c_k e^{ikx}``."""
        w = self.spectrum()
        c = np.empty(2 * self.degree + 1, dtype=complex)
        c[self.degree] = w[0]
        c[self.degree + 1 :] = 0.5 * w[1:]
        c[: self.degree] = np.conj(0.5 * w[1:])[::-1]
        return c

    @classmethod
    def from_two_sided(cls, c):
        c = np.asarray(c)
        D = (c.size - 1) // 2
        w = np.empty(D + 1, dtype=complex)
        w[0] = c[D].real
        w[1:] = 2.0 * c[D + 1 :]
        return cls.from_spectrum(w)

    def coefficient_norm(self):
        return abs(self.a0) + float(np.abs(self.a).sum() + np.abs(self.b).sum())

    def tail(self, degree):
        """Largest coefficient magnitude above ``degree``."""
        if degree >= self.degree:
            return 0.0
        return float(max(np.abs(self.a[degree:]).max(), np.abs(self.b[degree:]).max()))

    # -- evaluation -------------------------------------------------------

    def __call__(self, x):
        return self.eval(x)

    def eval(self, x):
        """Evaluate at arbitrary points (Horner in ``e^{ix}``)."""
        x = np.asarray(x, dtype=float)
        if x.size * (self.degree + 1) <= _DIRECT_EVAL_MAX:
            # small batches: one dense product beats a long Python Horner loop
            k = np.arange(1, self.degree + 1, dtype=float)
            kx = x[..., None] * k
            out = self.a0 + np.cos(kx) @ self.a + np.sin(kx) @ self.b
            return float(out) if np.ndim(out) == 0 else out
        w = self.spectrum()
        z = np.exp(1j * x)
        acc = np.full(x.shape, w[-1], dtype=complex)
        for wk in w[-2::-1]:
            acc = acc * z + wk
        out = acc.real
        return float(out) if out.ndim == 0 else out

    def eval_uniform(self, N, start=-np.pi):
        """Values at ``start + 2 pi m / N``, ``m = 0..N-1``, via one FFT."""
        if N < 2 * self.degree + 1:
            # fold the spectrum; evaluation stays exact for any N
            x = start + TWO_PI * np.arange(N) / N
            return self.eval(x)
        w = self.spectrum()
        k = np.arange(w.size)
        w = w * np.exp(1j * k * start)
        buf = np.zeros(N // 2 + 1, dtype=complex)
        buf[: w.size] = w
        buf[1:] *= 0.5
        return np.fft.irfft(buf, n=N) * N

    # -- calculus ---------------------------------------------------------

    def derivative(self, order=1):
        if order == 0:
            return self
        k = np.arange(1, self.degree + 1, dtype=float)
        a, b = self.a, self.b
        for _ in range(order):
            a, b = k * b, -k * a
        return TrigPoly(0.0, a, b)

    def antiderivative_split(self):
        """
        Split ``int p`` into ``slope * x + periodic``.

        The periodic part is the term-wise antiderivative of the
        non-constant terms and has zero mean.
        """
        k = np.arange(1, self.degree + 1, dtype=float)
        periodic = TrigPoly(0.0, -self.b / k, self.a / k)
        return LinearPlusTrig(self.a0, periodic)

    def mean(self):
        return self.a0

    # -- arithmetic -------------------------------------------------------

    def with_degree(self, degree):
        """Zero-pad (or truncate, if the dropped part is exactly zero) to ``degree``."""
        if degree == self.degree:
            return self
        if degree > self.degree:
            pad = degree - self.degree
            return TrigPoly(self.a0, np.pad(self.a, (0, pad)), np.pad(self.b, (0, pad)))
        if self.tail(degree) != 0.0:
            raise ValueError("truncation would drop nonzero coefficients")
        return TrigPoly(self.a0, self.a[:degree], self.b[:degree])

    def __add__(self, other):
        if isinstance(other, LinearPlusTrig):
            return other + self
        if not isinstance(other, TrigPoly):
            other = TrigPoly.constant(float(other))
        D = max(self.degree, other.degree)
        p, q = self.with_degree(D), other.with_degree(D)
        return TrigPoly(p.a0 + q.a0, p.a + q.a, p.b + q.b)

    __radd__ = __add__

    def __neg__(self):
        return TrigPoly(-self.a0, -self.a, -self.b)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, TrigPoly):
            return self.multiply(other)
        c = float(other)
        return TrigPoly(c * self.a0, c * self.a, c * self.b)

    __rmul__ = __mul__

    def __truediv__(self, c):
        return self * (1.0 / float(c))

    def multiply(self, other):
        """Exact product; degree is ``deg p + deg q``."""
        c1, c2 = self.two_sided(), other.two_sided()
        if min(c1.size, c2.size) * max(c1.size, c2.size) > _FFT_CONV_MIN * 64 and min(
            c1.size, c2.size
        ) > 64:
            c = fftconvolve(c1, c2)
        else:
            c = np.convolve(c1, c2)
        return TrigPoly.from_two_sided(c)

    def shift(self, x0):
        """The polynomial ``x -> p(x - x0)``."""
        k = np.arange(self.degree + 1)
        return TrigPoly.from_spectrum(self.spectrum() * np.exp(-1j * k * x0))

    def __repr__(self):
        return f"TrigPoly(degree={self.degree}, a0={self.a0:.6g})"


@dataclass(frozen=True, eq=False)
class LinearPlusTrig:
    """``slope * x + periodic(x)`` with a :class:`TrigPoly` periodic part."""

    slope: float
    periodic: TrigPoly

    def __post_init__(self):
        object.__setattr__(self, "slope", float(self.slope))

    @property
    def degree(self):
        return self.periodic.degree

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = self.slope * x + self.periodic.eval(x)
        return float(out) if np.ndim(out) == 0 else out

    def derivative(self):
        """The derivative, a :class:`TrigPoly` of the same degree."""
        d = self.periodic.derivative()
        return TrigPoly(self.slope, d.a, d.b)

    def __add__(self, other):
        if isinstance(other, LinearPlusTrig):
            return LinearPlusTrig(self.slope + other.slope, self.periodic + other.periodic)
        if isinstance(other, TrigPoly):
            return LinearPlusTrig(self.slope, self.periodic + other)
        return LinearPlusTrig(self.slope, self.periodic + float(other))

    __radd__ = __add__

    def __neg__(self):
        return LinearPlusTrig(-self.slope, -self.periodic)

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, c):
        c = float(c)
        return LinearPlusTrig(c * self.slope, c * self.periodic)

    __rmul__ = __mul__

    def __repr__(self):
        return f"LinearPlusTrig(slope={self.slope:.6g}, degree={self.degree})"


class BreakpointSet:
    """
    The ``2s`` sign-change points ``-pi <= y_2s < ... < y_1 < pi``.

    Points are kept in decreasing order so that ``y(1)`` is the largest;
    ``y(i)`` extends to every integer via ``y_i = y_{i+2s} + 2 pi``.
    """

    def __init__(self, points):
        pts = np.sort(np.asarray(points, dtype=float).ravel())[::-1]
        if pts.size == 0 or pts.size % 2:
            raise ValueError("need a positive even number of breakpoints")
        if np.any(np.diff(pts) >= 0):
            raise ValueError("breakpoints must be distinct")
        if pts[-1] < -np.pi or pts[0] >= np.pi:
            raise ValueError("breakpoints must lie in [-pi, pi)")
        pts.setflags(write=False)
        self.points = pts

    @property
    def s(self):
        return self.points.size // 2

    def y(self, i):
        m = 2 * self.s
        q, r = divmod(i - 1, m)
        return float(self.points[r] - TWO_PI * q)

    def gaps(self):
        """Consecutive gaps ``y_{i-1} - y_i``, wrap-around included."""
        p = self.points
        return np.append(-np.diff(p), p[-1] + TWO_PI - p[0])

    def distance(self, x):
        """Periodic distance from ``x`` to the nearest breakpoint."""
        x = np.asarray(x, dtype=float)
        d = np.abs((x[..., None] - self.points + np.pi) % TWO_PI - np.pi)
        return d.min(axis=-1)

    def replace(self, old, new):
        pts = [p for p in self.points if p != old] + [new]
        return BreakpointSet(pts)

    def extend(self, *extra):
        return BreakpointSet(list(self.points) + list(extra))

    def __len__(self):
        return self.points.size

    def __iter__(self):
        return iter(self.points)

    def __repr__(self):
        return f"BreakpointSet({[round(float(p), 6) for p in self.points]})"


def make_pi(Y):
    """
    The sign polynomial ``prod_i sin((x - y_i) / 2)`` as a degree-``s`` TrigPoly.

    Breakpoints are paired; ``sin((x-u)/2) sin((x-v)/2)`` equals
    ``(cos((u-v)/2) - cos(x - (u+v)/2)) / 2``, a degree-one polynomial.
    """
    pts = list(Y.points if isinstance(Y, BreakpointSet) else Y)
    if len(pts) % 2:
        raise ValueError("odd number of factors is not a trigonometric polynomial")
    out = TrigPoly.constant(1.0)
    for u, v in zip(pts[0::2], pts[1::2]):
        m = 0.5 * (u + v)
        pair = TrigPoly(0.5 * np.cos(0.5 * (u - v)), [-0.5 * np.cos(m)], [-0.5 * np.sin(m)])
        out = out.multiply(pair)
    return out


def pi_direct(Y, x):
    """Reference product evaluation of the sign polynomial."""
    pts = Y.points if isinstance(Y, BreakpointSet) else np.asarray(Y)
    x = np.asarray(x, dtype=float)
    return np.prod(np.sin(0.5 * (x[..., None] - pts)), axis=-1)


def binomial_row(r):
    return np.array([comb(r, j) for j in range(r + 1)], dtype=float)

"""
Polynomial constructions and their assembly into the comonotone approximant.

The pieces are

* ``T_j`` and ``Tbar_j``: averaged step approximants attached to grid
  intervals away from the breakpoints;
* ``V_n(G)``: a comonotone interpolation-like operator built from the
  increments of ``G`` over the grid;
* ``Theta``: an unconstrained Jackson-Stechkin operator applied to the
  periodic part of ``G2``;
* ``R``: ``Theta`` plus a small positive multiple of the ``Tbar_j`` over the
  steep intervals;
* ``K_i`` and ``U_i``: corrections that repair the sign of ``R'`` near each
  breakpoint.

``assemble_tau`` chains everything and measures the result.
"""

from __future__ import annotations

import logging
import time
import warnings
from dataclasses import dataclass, field
from math import comb

import numpy as np
from scipy.optimize import minimize_scalar

from .decompose import build_split
from .kernels import estimate_constants, jackson_poly, make_kernel
from .partition import (
    build_O_and_H,
    build_partition,
    find_N,
    find_N1,
    lemma1_constant,
)
from .step import admissible, build_step
from .trigpoly import BreakpointSet, LinearPlusTrig, TrigPoly, make_pi
from .verify import comonotonicity_margin, sup_error

__all__ = [
    "LedgerEntry",
    "ConstantsLedger",
    "ApproximationResult",
    "StageError",
    "AdmissibilityWarning",
    "DegreeBudgetExceeded",
    "resolve_constants",
    "CorrectionContext",
    "build_Tj",
    "build_Tbar_j",
    "build_Vn",
    "build_theta",
    "build_R",
    "build_Ki",
    "build_Ui",
    "assemble_tau",
    "estimate_instance_constants",
    "resolve_strict",
    "derivative_at",
]

log = logging.getLogger(__name__)

TWO_PI = 2.0 * np.pi
MODES = ("strict", "practical")
KAPPA_MAX_EXP = 10
# R'(y_i) below this fraction of sup |R'| is treated as coefficient noise
NOISE_REL = 1e-11


class StageError(RuntimeError):
    """A pipeline stage failed; ``stage`` names it."""

    def __init__(self, stage, cause):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause


class AdmissibilityWarning(UserWarning):
    """A step center is closer to a breakpoint than the theory's threshold."""


class DegreeBudgetExceeded(ValueError):
    """The requested construction would exceed the configured degree budget."""


# -- constants ledger -------------------------------------------------------


@dataclass
class LedgerEntry:
    value: float
    provenance: str
    note: str = ""

    def __post_init__(self):
        if self.provenance not in ("formula", "estimated", "configured"):
            raise ValueError(f"unknown provenance {self.provenance!r}")


@dataclass
class ConstantsLedger:
    """
    Named constants with provenance.

    ``entries`` maps a name to a :class:`LedgerEntry`.  Entries that depend
    on the instance (such as ``c23``, estimated from the built correction
    polynomials) may be added after resolution with :meth:`record`.
    """

    s: int
    r: int
    mode: str
    entries: dict = field(default_factory=dict)
    degree_budget: int = 1 << 16

    def __getitem__(self, name):
        return self.entries[name].value

    def __contains__(self, name):
        return name in self.entries

    def get(self, name, default=None):
        e = self.entries.get(name)
        return default if e is None else e.value

    def record(self, name, value, provenance, note=""):
        value = float(value)
        if not np.isfinite(value) or value <= 0:
            raise ValueError(f"ledger entry {name} must be positive and finite, got {value}")
        self.entries[name] = LedgerEntry(value, provenance, note)

    def n1(self, n):
        return int(np.ceil(self["n1_multiplier"] * n))

    def n2(self, n):
        return int(np.ceil(self["n2_multiplier"] * n))

    def snapshot(self):
        return {
            "mode": self.mode,
            "s": self.s,
            "r": self.r,
            "entries": {
                k: {"value": e.value, "provenance": e.provenance, "note": e.note}
                for k, e in sorted(self.entries.items())
            },
        }

    def copy(self):
        return ConstantsLedger(
            self.s,
            self.r,
            self.mode,
            {k: LedgerEntry(e.value, e.provenance, e.note) for k, e in self.entries.items()},
            self.degree_budget,
        )


PRACTICAL_DEFAULTS = {"n1_multiplier": 4.0, "n2_multiplier": 4.0, "kappa": 1.0}


def resolve_constants(s, r, l_set=None, mode="practical", overrides=None, estimates=None):
    """
    Fill a :class:`ConstantsLedger`.

    Parameters
    ----------
    s, r : int
        Half the number of breakpoints, and the smoothness order.
    l_set : iterable of int, optional
        Kernel orders whose moment constants should be estimated.  Defaults
        to ``{s+2, s+3}`` and, in strict mode, the Theta order ``2(s+1)+r``.
    mode : {"strict", "practical"}
    overrides : dict, optional
        Name to value; recorded with provenance ``configured``.  ``c23``,
        ``c25p`` and ``c29`` may be supplied here; otherwise strict mode
        expects them to be estimated by the caller and added via
        :meth:`ConstantsLedger.record` before :func:`finalize_strict`.
    estimates : dict, optional
        Precomputed :class:`~comonotone.kernels.KernelConstants` keyed by
        ``l``; used in place of fresh estimates.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    if s < 1 or r < 2:
        raise ValueError("need s >= 1 and r >= 2")
    overrides = dict(overrides or {})
    estimates = dict(estimates or {})
    l_theta = 2 * (s + 1) + r
    if l_set is None:
        l_set = {s + 2, s + 3} | ({l_theta} if mode == "strict" else set())
    led = ConstantsLedger(s=s, r=r, mode=mode)
    if "degree_budget" in overrides:
        led.degree_budget = int(overrides.pop("degree_budget"))
    led.record("c1", lemma1_constant(r), "formula", "(2r-3)^(r-1)/(r-1)! + (r-1)(2r-3)^(r-2)")
    for l in sorted(l_set):
        kc = estimates.get(l)
        if kc is None:
            kc = estimate_constants(l)
        led.record(f"C12[{l}]", kc.C12, "estimated", f"max symmetric moment, n in {kc.n_range}")
        led.record(
            f"C12_nu2s[{l}]",
            kc.C12_by_nu[min(2 * s, 2 * l - 2)],
            "estimated",
            "moment of order 2s, the one the step lemma uses",
        )
        led.record(f"C11[{l}]", max(kc.C11.values()), "estimated", "max tail moment constant")
        led.record(f"C10[{l}]", kc.C10, "estimated", "upper bound on gamma / n^(2l-1)")
    missing = [l for l in (s + 2, s + 3) if f"C12[{l}]" not in led]
    if missing:
        raise ValueError(f"kernel estimates missing for l in {missing}")
    c12 = max(led[f"C12[{s + 2}]"], led[f"C12[{s + 3}]"])
    led.record("c12", c12, "formula", "max(C12[s+2], C12[s+3])")
    led.record("c16", 2 * s * led[f"C12[{s + 2}]"], "formula", "2 s C12[s+2]")
    if mode == "strict":
        led.record("n1_multiplier", 4 * (s + 1) * c12, "formula", "4(s+1) c12")
    else:
        led.record("n1_multiplier", PRACTICAL_DEFAULTS["n1_multiplier"], "configured")
        led.record("n2_multiplier", PRACTICAL_DEFAULTS["n2_multiplier"], "configured")
        led.record("kappa", PRACTICAL_DEFAULTS["kappa"], "configured", "base weight of U_i")
    for name, value in overrides.items():
        led.record(name, value, "configured")
    if mode == "strict" and all(k in led for k in ("c23", "c25p", "c29")):
        finalize_strict(led)
    return led


def theta_C31(led):
    """``max(2 C12, 4 C11 r^(2l-r)) / pi^(r-1)`` for the Theta kernel order."""
    s, r = led.s, led.r
    l = 2 * (s + 1) + r
    if f"C12[{l}]" not in led:
        raise ValueError(f"strict mode needs kernel estimates for l={l}")
    return max(2 * led[f"C12[{l}]"], 4 * led[f"C11[{l}]"] * r ** (2 * l - r)) / np.pi ** (r - 1)


def finalize_strict(led):
    """Compute ``c34`` and ``n2_multiplier`` once ``c23``, ``c25p`` and ``c29`` are known."""
    s, r = led.s, led.r
    c31 = theta_C31(led)
    led.record("c31", c31, "formula", "max(2 C12, 4 C11 r^(2l-r)) / pi^(r-1) at l = 2(s+1)+r")
    k = 4 * led["c23"] * led["c29"] * c31 / led["c25p"]
    terms = [
        (4 * led["c29"] * c31) ** (1.0 / (r - 1)),
        5 ** (4 * (s + 1)) * k,
        (k * (1 + (r - 2) * np.pi) ** (4 * (s + 1))) ** (1.0 / (r - 1)),
    ]
    if "n2_multiplier" in led and led.entries["n2_multiplier"].provenance == "configured":
        return led
    led.record(
        "c34",
        max(terms),
        "formula",
        "three-way max; exponent 1/(r-1) and factor (1+(r-2)pi) as the sign argument needs",
    )
    led.record("n2_multiplier", led["c34"], "formula", "n2 = c34 n")
    if "kappa" not in led:
        led.record("kappa", 1.0, "configured", "base weight of U_i; searched upward")
    return led


# -- correction polynomials -------------------------------------------------


def _pair(u, v):
    """``sin((x-u)/2) sin((x-v)/2)`` as a degree-one polynomial."""
    m = 0.5 * (u + v)
    return TrigPoly(0.5 * np.cos(0.5 * (u - v)), [-0.5 * np.cos(m)], [-0.5 * np.sin(m)])


def _drop_factor(points, y):
    """Remove the breakpoint ``y`` from a list of points, by nearest match."""
    pts = list(points)
    k = int(np.argmin([abs(p - y) for p in pts]))
    del pts[k]
    return pts


class CorrectionContext:
    """
    Shared state for the correction polynomials at one ``n``.

    Holds the grid, the breakpoints, ``n1`` and caches of ``T_j`` so that each
    is built once.  ``strict_admissibility`` turns the admissibility test
    into an error; otherwise failures are counted and reported as warnings.
    """

    def __init__(self, grid, Y, ledger, strict_admissibility=None):
        self.grid = grid
        self.n = grid.n
        self.Y = Y
        self.s = Y.s
        self.ledger = ledger
        self.n1 = ledger.n1(grid.n)
        self.pi_poly = make_pi(Y)
        self.strict = ledger.mode == "strict" if strict_admissibility is None else strict_admissibility
        self.admissibility_failures = 0
        self._Tj = {}
        self._Tbar = {}
        # admissibility uses the moment of order 2s, the one the step lemma needs
        self._C = ledger.get(f"C12_nu2s[{self.s + 2}]", 1.0)

    def sign_pi(self, x):
        return float(np.sign(self.pi_poly(x)))

    def centers(self, j):
        xs = float(self.grid.midpoint(j))
        return xs, xs + np.pi / self.n1

    def _check(self, x, Y):
        if not admissible(x, Y, self.n1, self._C):
            self.admissibility_failures += 1
            msg = f"center {x:.6g} is inside the admissibility radius at n1={self.n1}"
            if self.strict:
                raise ValueError(msg)
            warnings.warn(msg, AdmissibilityWarning, stacklevel=3)

    def step(self, l, x, Y, pi_poly):
        self._check(x, Y)
        return build_step(l, self.n1, x, Y, pi_poly=pi_poly).value

    def Tj(self, j):
        j = int(j)
        if j not in self._Tj:
            a, b = self.centers(j)
            l = self.s + 2
            T = self.step(l, a, self.Y, self.pi_poly) + self.step(l, b, self.Y, self.pi_poly)
            self._Tj[j] = T * 0.5
        return self._Tj[j]

    def Tstar_j(self, j):
        g = self.grid
        xa, xb = float(g.x(j)), float(g.x(j - 1))
        pts = list(self.Y.points) + [xa, xb]
        wrapped = [(p + np.pi) % TWO_PI - np.pi for p in pts]
        Yj = BreakpointSet(wrapped)
        pi_j = self.pi_poly.multiply(_pair(xa, xb))
        xs = float(g.midpoint(j))
        # the wrapped set only carries s; the sign polynomial is built unwrapped
        return self.step(self.s + 3, xs, Yj, pi_j)

    def Tbar_j(self, j):
        j = int(j)
        if j not in self._Tbar:
            diff = self.Tj(j) - self.Tstar_j(j)
            if abs(diff.slope) > 1e-10:
                raise ValueError(f"Tbar_{j} has slope residue {diff.slope:.3e}")
            self._Tbar[j] = diff.periodic * self.sign_pi(self.grid.midpoint(j))
        return self._Tbar[j]

    def global_step(self, x_center):
        return self.step(self.s + 2, x_center, self.Y, self.pi_poly)


def build_Tj(j, grid, Y, ledger, ctx=None):
    """Average of the steps at the midpoint of ``I_j`` and ``pi / n1`` to its right."""
    ctx = ctx or CorrectionContext(grid, Y, ledger)
    return ctx.Tj(j)


def build_Tbar_j(j, grid, Y, ledger, ctx=None):
    """``(T_j - T_j^*) sign Pi(x_j)`` as a periodic polynomial."""
    ctx = ctx or CorrectionContext(grid, Y, ledger)
    return ctx.Tbar_j(j)


class _Accumulator:
    """Fixed-order sum of ``LinearPlusTrig`` / ``TrigPoly`` terms."""

    def __init__(self):
        self.slope = 0.0
        self.a0 = 0.0
        self.a = np.zeros(0)
        self.b = np.zeros(0)

    def add(self, term, weight=1.0):
        if isinstance(term, LinearPlusTrig):
            self.slope += weight * term.slope
            term = term.periodic
        D = term.degree
        if D > self.a.size:
            self.a = np.pad(self.a, (0, D - self.a.size))
            self.b = np.pad(self.b, (0, D - self.b.size))
        self.a0 += weight * term.a0
        self.a[:D] += weight * term.a
        self.b[:D] += weight * term.b

    def linear(self):
        return LinearPlusTrig(self.slope, TrigPoly(self.a0, self.a, self.b))

    def poly(self):
        return TrigPoly(self.a0, self.a, self.b)


# -- V_n --------------------------------------------------------------------


def build_Vn(G, grid, Y, ledger, ctx=None, sign_tol=1e-12):
    """
    Comonotone operator built from the grid increments of ``G``.

    ``G`` is either a callable or an array of ``G(x_j)`` for ``j = -n..n``.
    Increments over ``H`` multiply ``T_j``; the few increments over the
    breakpoint neighborhoods multiply a global step centered at a point
    where ``Pi`` has the matching sign.
    """
    n = grid.n
    N, x_plus, x_minus = find_N(Y)
    if n <= N:
        raise ValueError(f"n={n} must exceed N={N}")
    js = np.arange(-n, n + 1)
    vals = np.asarray(G(grid.x(js)) if callable(G) else G, dtype=float)
    if vals.shape != js.shape:
        raise ValueError(f"expected {js.size} grid values")
    ctx = ctx or CorrectionContext(grid, Y, ledger)
    st = build_O_and_H(Y, grid)[2]
    window = grid.indices()
    inc = vals[window - 1 + n] - vals[window + n]  # G(x_{j-1}) - G(x_j)
    scale = max(np.abs(inc).max(initial=0.0), 1e-300)
    acc = _Accumulator()
    acc.add(TrigPoly.constant(vals[2 * n]))  # G(-pi) = G(x_n)
    up = down = 0.0
    for p, j in enumerate(window):
        d = inc[p]
        if st[p]:
            if d == 0.0:
                continue
            sp = ctx.sign_pi(grid.midpoint(j))
            if d * sp < -sign_tol * scale:
                raise ValueError(f"increment over I_{j} has the wrong sign for comonotonicity")
            acc.add(ctx.Tj(j), d)
        elif d >= 0:
            up += d
        else:
            down += d
    # the global steps are shared, so their weights are summed first
    if up:
        acc.add(ctx.global_step(x_plus), up)
    if down:
        acc.add(ctx.global_step(x_minus), down)
    return acc.linear()


# -- Theta ------------------------------------------------------------------


def _theta_grid_size(D):
    N = 1 << int(np.ceil(np.log2(max(16 * D, 4096))))
    return N


def build_theta(n2, l, r, G_periodic, N=None, rtol=1e-9):
    """
    Jackson-Stechkin operator of order ``r`` with kernel ``J_{l,n2}``.

    The integral is evaluated by the periodic trapezoid rule on ``N``
    equispaced nodes; since all shifts ``j tau`` land on the same grid,
    each term is a multiplier on the discrete spectrum of ``G``.  The
    resulting samples are converted with ``from_samples`` at degree
    ``l (n2 - 1)``.  The same computation on every other node checks the
    quadrature has converged.
    """
    if not l > r + 2:
        raise ValueError(f"need l > r + 2, got l={l}, r={r}")
    spec = make_kernel(l, n2)
    D = spec.degree
    N = N or _theta_grid_size(D)
    x = -np.pi + TWO_PI * np.arange(N) / N
    if isinstance(G_periodic, TrigPoly):
        g = G_periodic.eval_uniform(N)
    else:
        g = np.asarray(G_periodic(x), dtype=float)
    full = _theta_samples(g, jackson_poly(spec), r, D)
    half = _theta_samples(g[::2], jackson_poly(spec), r, D)
    theta = TrigPoly.from_samples(full, degree=D)
    coarse = TrigPoly.from_samples(half, degree=D)
    gap = np.abs(theta.spectrum() - coarse.spectrum()).max()
    scale = max(1.0, np.abs(g).max())
    if gap > rtol * scale:
        raise ValueError(f"Theta quadrature not converged: coefficient gap {gap:.3e}")
    return theta


def _theta_samples(g, J, r, D):
    N = g.size
    if N < 2 * D + 2:
        raise ValueError("quadrature grid too coarse for the kernel degree")
    G = np.fft.rfft(g)
    k = np.arange(G.size)
    cJ = np.zeros(N)
    cJ[: D + 1] = J.spectrum().real * np.where(np.arange(D + 1) == 0, 1.0, 0.5)
    # two-sided kernel coefficients are even and real: c_{-m} = c_m
    cJ[N - D :] = cJ[1 : D + 1][::-1]
    mult = np.zeros(G.size)
    for j in range(1, r + 1):
        coef = -((-1) ** r) * (-1) ** (r - j) * comb(r, j)
        mult += coef * TWO_PI * cJ[(j * k) % N]
    return np.fft.irfft(G * mult, n=N)


# -- R, K_i, U_i ------------------------------------------------------------


def estimate_c23(ctx, indices, per_interval=16):
    """``max_j max_{x in I_j} |Tbar_j'(x)| / n`` over the given indices."""
    best = 0.0
    u = np.linspace(0.0, 1.0, per_interval)
    for j in indices:
        x = ctx.grid.x(j) + ctx.grid.h * u
        d = ctx.Tbar_j(j).derivative()(x)
        best = max(best, float(np.abs(d).max()))
    return best / ctx.n


def build_R(tildeG2, B, partition, ledger, ctx, n2=None, theta=None):
    """
    ``Theta(tildeG2) - B x + pi^(r-1) / (2 c23 n^r) sum Tbar_j`` over the steep,
    non-``W1`` indices of ``H`` outside ``M**``.

    Returns ``(R, L_indices)``.
    """
    r = ledger.r
    s = ledger.s
    n = partition.grid.n
    if theta is None:
        n2 = n2 or ledger.n2(n)
        theta = build_theta(n2, 2 * (s + 1) + r, r, tildeG2)
    # steep intervals away from M**, where G2' = f' is bounded below
    mask = partition.V2_minus_W1 & partition.H & ~partition.M2
    idx = partition.indices(mask)
    acc = _Accumulator()
    acc.add(theta)
    if idx.size:
        if "c23" not in ledger:
            ledger.record("c23", estimate_c23(ctx, idx), "estimated", "max |Tbar_j'| / n on I_j")
        w = np.pi ** (r - 1) / (2 * ledger["c23"] * n**r)
        L = _Accumulator()
        for j in idx:
            L.add(ctx.Tbar_j(j))
        acc.add(L.poly(), w)
    R = LinearPlusTrig(-B, acc.poly())
    return R, idx


def _averaged_steps(ctx, j, points, y_drop, y_new):
    """Average of the ``s+2`` steps at the two centers of ``I_j`` for a modified set."""
    pts = _drop_factor(points, y_drop) + [y_new]
    pi_mod = make_pi(pts)
    Ymod = BreakpointSet([(p + np.pi) % TWO_PI - np.pi for p in pts])
    a, b = ctx.centers(j)
    l = ctx.s + 2
    return (ctx.step(l, a, Ymod, pi_mod) + ctx.step(l, b, Ymod, pi_mod)) * 0.5


def _breakpoint_index(ctx, i):
    y = ctx.Y.y(i)
    j = int(ctx.grid.index_of(y))
    return y, j


def build_Kbar(i, ctx):
    y, j = _breakpoint_index(ctx, i)
    P = _averaged_steps(ctx, j - 2, ctx.Y.points, y, float(ctx.grid.x(j + 1)))
    K = (ctx.Tj(j + 2) - P) * ctx.sign_pi(ctx.grid.midpoint(j + 2))
    return _periodic(K, "Kbar")


def build_Kunder(i, ctx):
    y, j = _breakpoint_index(ctx, i)
    P = _averaged_steps(ctx, j + 2, ctx.Y.points, y, float(ctx.grid.x(j - 2)))
    K = (ctx.Tj(j - 2) - P) * ctx.sign_pi(ctx.grid.midpoint(j - 2))
    return _periodic(K, "Kunder")


def _periodic(lin, name):
    if abs(lin.slope) > 1e-10:
        raise ValueError(f"{name} has slope residue {lin.slope:.3e}")
    return lin.periodic


def derivative_noise(R, ulps=64):
    """Rounding bound for evaluating ``R'`` at one point."""
    p = R.periodic if isinstance(R, LinearPlusTrig) else R
    k = np.arange(1, p.degree + 1)
    bound = float((k * (np.abs(p.a) + np.abs(p.b))).sum())
    if isinstance(R, LinearPlusTrig):
        bound += abs(R.slope)
    return ulps * np.finfo(float).eps * bound


def derivative_at(p, y):
    """
    ``p'(y)`` summed in extended precision.

    Near a breakpoint the terms of ``K_i'(y_i)`` are many orders of magnitude
    larger than their sum, so a float64 evaluation loses most digits.
    """
    slope = 0.0
    if isinstance(p, LinearPlusTrig):
        slope, p = p.slope, p.periodic
    k = np.arange(1, p.degree + 1, dtype=np.longdouble)
    ky = k * np.longdouble(y)
    a = p.a.astype(np.longdouble)
    b = p.b.astype(np.longdouble)
    return float(np.longdouble(slope) + (k * (b * np.cos(ky) - a * np.sin(ky))).sum())


def build_Ki(i, R, ctx, floor=None):
    """
    Correction at ``y_i`` that cancels ``R'(y_i)`` exactly.

    The branch follows the sign of ``R'(y_i)`` relative to ``Pi`` just left
    of the neighborhood: the rescaled ``Kbar_i`` when they agree, the
    rescaled ``Kunder_i`` otherwise.
    """
    y, j = _breakpoint_index(ctx, i)
    dRp = R.derivative()
    dR = derivative_at(R, y)
    sup = float(np.abs(dRp.eval_uniform(max(4096, 4 * dRp.degree))).max())
    if abs(dR) <= max(derivative_noise(R), NOISE_REL * sup):
        # R'(y_i) is zero up to rounding; rescaling a correction by it would
        # only amplify the noise
        return TrigPoly.zero(), {"branch": "none", "R_prime": dR}
    if dR * ctx.sign_pi(ctx.grid.midpoint(j + 2)) >= 0:
        K, branch = build_Kbar(i, ctx), "bar"
    else:
        K, branch = build_Kunder(i, ctx), "under"
    dK = derivative_at(K, y)
    floor = 1e-10 * ctx.n if floor is None else floor
    if abs(dK) < floor:
        raise ValueError(f"degenerate correction at y_{i}: |K'(y_i)| = {abs(dK):.3e}")
    K = K * abs(dR / dK)
    # rescaled coefficients carry rounding that the conditioning of K'(y_i)
    # magnifies; a degree-one term -eps sin(x - y_i) removes what is left
    eps = dR + derivative_at(K, y)
    K = K + TrigPoly(0.0, [eps * np.sin(y)], [-eps * np.cos(y)])
    return K, {"branch": branch, "R_prime": dR, "K_prime": derivative_at(K, y), "residual_fix": eps}


def build_Ui(i, ctx, r):
    """``(T_{j+2} - T_{j-2}) sign Pi(x*_{j+2}) / n^r``."""
    y, j = _breakpoint_index(ctx, i)
    U = (ctx.Tj(j + 2) - ctx.Tj(j - 2)) * (ctx.sign_pi(ctx.grid.midpoint(j + 2)) / ctx.n**r)
    return _periodic(U, "U")


def _closure_samples(ctx, i, per_interval=256):
    y, j = _breakpoint_index(ctx, i)
    a, b = float(ctx.grid.x(j + 1)), float(ctx.grid.x(j - 2))
    return np.linspace(a, b, 3 * per_interval + 1)


def search_kappa(R, Ks, Us, ctx, base=1.0, tol=1e-10):
    """
    Smallest ``base * 2^k`` (``k <= 10``) with ``(R' + K_i' + kappa U_i') Pi >= -tol``
    on the closure of every breakpoint neighborhood.

    Returns ``(kappa, passed, worst)`` where ``worst`` is the most negative
    normalized value at the returned ``kappa``.
    """
    dR = R.derivative()
    samples = []
    for i, (K, U) in enumerate(zip(Ks, Us), start=1):
        x = _closure_samples(ctx, i)
        p = ctx.pi_poly(x)
        a = (dR(x) + K.derivative()(x)) * p
        u = U.derivative()(x) * p
        samples.append((a, u))
    worst = 0.0
    for k in range(KAPPA_MAX_EXP + 1):
        kappa = base * 2.0**k
        worst = 0.0
        for a, u in samples:
            v = a + kappa * u
            scale = max(np.abs(v).max(), 1e-300)
            worst = min(worst, float(v.min() / scale))
        if worst >= -tol:
            return kappa, True, worst
    return kappa, False, worst


# -- assembly ---------------------------------------------------------------


@dataclass
class ApproximationResult:
    tau: TrigPoly
    degree: int
    sup_error: float
    comonotonicity_margin: float
    mode: str
    ledger: dict
    n: int = 0
    fallback: bool = False
    timings: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)

    def row(self):
        return {
            "n": self.n,
            "degree": self.degree,
            "sup_error": self.sup_error,
            "margin": self.comonotonicity_margin,
            "mode": self.mode,
            "wall_ms": 1000.0 * sum(self.timings.values()),
        }


class _Stages:
    def __init__(self):
        self.timings = {}

    def run(self, name, fn, *args, **kw):
        t0 = time.perf_counter()
        try:
            out = fn(*args, **kw)
        except StageError:
            raise
        except Exception as exc:
            raise StageError(name, exc) from exc
        self.timings[name] = self.timings.get(name, 0.0) + time.perf_counter() - t0
        return out


def _predicted_degree(led, n):
    s, r = led.s, led.r
    n1 = led.n1(n)
    deg = (s + 3) * (n1 - 1) + s + 1
    if "n2_multiplier" in led:
        deg = max(deg, (2 * (s + 1) + r) * (led.n2(n) - 1))
    return deg


def _range(f, m):
    """``(min f, max f)`` from ``m`` samples, each refined by a bounded search."""
    x = -np.pi + TWO_PI * np.arange(m) / m
    fx = np.asarray(f(x), dtype=float)
    h = TWO_PI / m
    out = []
    for sign, k in ((1.0, int(np.argmin(fx))), (-1.0, int(np.argmax(fx)))):
        res = minimize_scalar(
            lambda t: sign * float(f(t)), bounds=(x[k] - h, x[k] + h), method="bounded", options={"xatol": 1e-12}
        )
        out.append(sign * min(sign * fx[k], float(res.fun)))
    return out[0], out[1]


def _check_membership(fprime, Y, samples=20000):
    x = -np.pi + TWO_PI * (np.arange(samples) + 0.5) / samples
    v = np.asarray(fprime(x), dtype=float) * make_pi(Y)(x)
    scale = max(np.abs(v).max(), 1e-300)
    if v.min() < -1e-10 * scale:
        raise ValueError("f' Pi takes negative values; f does not follow the sign pattern of Y")


def _measure(f, tau, pi_poly, n, grid_density):
    pts = max(grid_density * n, 8 * max(tau.degree, 1), 64)
    return sup_error(f, tau, pts), comonotonicity_margin(tau, pi_poly, pts)


MARGIN_TOL = 1e-9


def assemble_tau(
    f,
    fprime,
    Y,
    r,
    n,
    ledger=None,
    grid_density=4096,
    samples_per_interval=32,
    retune=True,
    return_parts=False,
):
    """
    Build the comonotone approximant of degree ``O(n)``.

    Parameters
    ----------
    f, fprime : callable
        Vectorized evaluables of the function and its derivative.
    Y : BreakpointSet
    r : int
        Smoothness order, ``>= 2``.
    n : int
        Grid size; the grid has ``2n`` intervals.
    ledger : ConstantsLedger, optional
        Defaults to a practical-mode ledger.
    grid_density : int
        Samples per unit of ``n`` for the error and margin measurements.
    retune : bool
        Practical mode only.  When the sampled margin falls below
        ``-MARGIN_TOL``, rebuild with ``n1`` halved (down to ``n1 = n``) and
        keep the first construction that passes.

    Returns
    -------
    ApproximationResult
        ``result.diagnostics["attempts"]`` lists every tried ``n1`` multiplier
        with its margin.
    """
    if not isinstance(Y, BreakpointSet):
        Y = BreakpointSet(Y)
    led = (ledger or resolve_constants(Y.s, r)).copy()
    stages = _Stages()
    pi_poly = make_pi(Y)
    stages.run("membership", _check_membership, fprime, Y)
    N, _, _ = find_N(Y)
    N1 = find_N1(Y)
    N2 = max(N, N1)
    diag = {"N": N, "N1": N1, "N2": N2}

    if n <= N2:
        lo, hi = _range(f, max(4096, 64 * n))
        tau = TrigPoly.constant(0.5 * (lo + hi))
        err, margin = stages.run("verify", _measure, f, tau, pi_poly, max(n, 1), grid_density)
        diag["stage"] = "fallback"
        res = ApproximationResult(
            tau, 0, err, margin, led.mode, led.snapshot(), n, True, stages.timings, diag
        )
        return (res, {}) if return_parts else res

    attempts = []
    while True:
        trial = led.copy()
        res, parts = _pipeline(
            f, fprime, Y, r, n, trial, grid_density, samples_per_interval, stages, dict(diag)
        )
        attempts.append({"n1_multiplier": trial["n1_multiplier"], "margin": res.comonotonicity_margin})
        m1 = led["n1_multiplier"]
        if (
            res.comonotonicity_margin >= -MARGIN_TOL
            or not retune
            or led.mode != "practical"
            or m1 <= 1.0
        ):
            break
        led.record(
            "n1_multiplier",
            max(1.0, m1 / 2),
            "configured",
            f"halved after a failed margin check at {m1:g}",
        )
    res.diagnostics["attempts"] = attempts
    res.timings = dict(stages.timings)
    return (res, parts) if return_parts else res


def _pipeline(f, fprime, Y, r, n, led, grid_density, samples_per_interval, stages, diag):
    s = Y.s
    pi_poly = make_pi(Y)
    if led.mode == "strict" and "n2_multiplier" not in led:
        raise StageError("constants", "strict mode needs c23, c25p and c29 to fix n2")
    deg = _predicted_degree(led, n)
    diag["predicted_degree"] = deg
    if deg > led.degree_budget:
        raise StageError(
            "constants",
            DegreeBudgetExceeded(f"predicted degree {deg} exceeds budget {led.degree_budget}"),
        )

    part = stages.run("partition", build_partition, fprime, r, n, Y, None, samples_per_interval)
    grid = part.grid
    diag["packs"] = len(part.packs)
    diag["W1"] = int(part.in_w1.sum())
    split = stages.run("split", build_split, f, fprime, part)
    diag["orientation_conflicts"] = split.orientation_conflicts
    ctx = CorrectionContext(grid, Y, led)
    parts = {"partition": part, "split": split, "ctx": ctx}

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", AdmissibilityWarning)
        if not part.packs:
            # no steep runs: G1 = f and V_n alone does the job
            js = np.arange(-n, n + 1)
            V = stages.run("V_n", build_Vn, np.asarray(f(grid.x(js)), float), grid, Y, led, ctx)
            total = V
            diag["B"] = 0.0
        else:
            V = stages.run("V_n", build_Vn, split.grid_G1, grid, Y, led, ctx)
            theta = stages.run(
                "theta", build_theta, led.n2(n), 2 * (s + 1) + r, r, split.tildeG2
            )
            R, L_idx = stages.run("R", build_R, split.tildeG2, split.B, part, led, ctx, theta=theta)
            diag["B"] = split.B
            diag["L_count"] = int(L_idx.size)
            Ks, Us, kinfo = [], [], []
            for i in range(1, 2 * s + 1):
                K, info = stages.run("corrections", build_Ki, i, R, ctx)
                Ks.append(K)
                Us.append(stages.run("corrections", build_Ui, i, ctx, r))
                kinfo.append(info)
            kappa, ok, worst = stages.run(
                "corrections", search_kappa, R, Ks, Us, ctx, led.get("kappa", 1.0)
            )
            led.record("kappa", kappa, "configured", f"power-of-two search; sampled check passed: {ok}")
            diag["kappa"] = kappa
            diag["lemma13_pass"] = ok
            diag["lemma13_worst"] = worst
            diag["K"] = kinfo
            acc = _Accumulator()
            acc.add(V)
            acc.add(R)
            for K, U in zip(Ks, Us):
                acc.add(K)
                acc.add(U, kappa)
            total = acc.linear()
            # relative to the sup of R', since R'(y_i) itself may be rounding noise
            dR_sup = float(np.abs(R.derivative().eval_uniform(max(4096, 4 * R.degree))).max())
            diag["cancellation"] = [
                abs(derivative_at(R, Y.y(i)) + derivative_at(K, Y.y(i))) / max(dR_sup, 1e-300)
                for i, (K, info) in enumerate(zip(Ks, kinfo), start=1)
            ]
            parts.update({"theta": theta, "R": R, "K": Ks, "U": Us})
    parts["V"] = V
    diag["linear_residue"] = abs(total.slope)
    if abs(total.slope) >= 1e-8:
        raise StageError("assemble", f"linear parts do not cancel: residue {total.slope:.3e}")
    tau = total.periodic
    diag["admissibility_failures"] = ctx.admissibility_failures
    err, margin = stages.run("verify", _measure, f, tau, pi_poly, n, grid_density)
    result = ApproximationResult(
        tau, tau.degree, err, margin, led.mode, led.snapshot(), n, False, {}, diag
    )
    return result, parts


def estimate_instance_constants(f, fprime, Y, r, n, n1_multiplier=4.0, samples=512, probes=4):
    """
    Empirical stand-ins for ``c23``, ``c25p`` and ``c29`` at one ``n``.

    ``c29`` bounds the ``(r-1)``-st derivative of ``g2 = f' - g1`` (finite
    differences on a grid of spacing ``h / 32``); ``c23`` and ``c25p`` are the
    upper bound on ``I_j`` and the lower bound away from ``O`` of
    ``|Tbar_j'|``, measured for a few ``j`` with ``n1 = n1_multiplier * n``.
    """
    if not isinstance(Y, BreakpointSet):
        Y = BreakpointSet(Y)
    s = Y.s
    part = build_partition(fprime, r, n, Y)
    split = build_split(f, fprime, part)
    grid = part.grid
    m = 64 * n
    delta = TWO_PI / m
    x = -np.pi + delta * np.arange(m + r)
    g2 = split.g2(x)
    c29 = float(np.abs(np.diff(g2, r - 1)).max() / delta ** (r - 1)) if r > 1 else 0.0
    proxy = ConstantsLedger(s, r, "practical", {"n1_multiplier": LedgerEntry(n1_multiplier, "configured")})
    ctx = CorrectionContext(grid, Y, proxy, strict_admissibility=False)
    H = part.indices(part.H)
    pick = H[np.linspace(0, H.size - 1, probes).astype(int)]
    xs = -np.pi + TWO_PI * (np.arange(samples) + 0.5) / samples
    c23 = 0.0
    c25p = np.inf
    excluded = ~part.H
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", AdmissibilityWarning)
        for j in pick:
            d = ctx.Tbar_j(j).derivative()
            a, b = grid.interval(j)
            inside = d(np.linspace(a, b, 33))
            c23 = max(c23, float(np.abs(inside).max()) / n)
            pos = grid.pos(grid.index_of(xs).clip(-n + 1, n))
            keep = ~excluded[pos] & ((xs < a) | (xs > b))
            dist = np.minimum(np.abs(xs - a), np.abs(xs - b))[keep]
            lower = np.abs(d(xs[keep])) / (n * (1.0 / (1.0 + n * dist)) ** (4 * (s + 1)))
            if lower.size:
                c25p = min(c25p, float(lower.min()))
    return {"c23": c23, "c25p": float(c25p), "c29": max(c29, 1e-300)}


def resolve_strict(f, fprime, Y, r, n, overrides=None):
    """Strict ledger with instance constants estimated at ``n`` and ``c34`` filled in."""
    if not isinstance(Y, BreakpointSet):
        Y = BreakpointSet(Y)
    overrides = dict(overrides or {})
    led = resolve_constants(Y.s, r, mode="strict", overrides=overrides)
    if "n2_multiplier" in led:
        return led
    est = estimate_instance_constants(f, fprime, Y, r, n)
    for name, value in est.items():
        if name not in led:
            led.record(name, value, "estimated", "measured at n1 = 4n as a proxy")
    return finalize_strict(led)

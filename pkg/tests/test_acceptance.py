"""
Acceptance criteria 1-9.

Each test prints one line ``criterion k: PASS|FAIL <measurements>`` before
asserting, and the same lines are repeated in the terminal summary.  The
tolerances are the stated ones; a criterion that the implementation does not
meet fails here.
"""

import time
import warnings

import numpy as np
import pytest
from oracles import extension_checks, lemma1_trials
from scipy.optimize import minimize_scalar

from comonotone.corpus import corpus, get_entry
from comonotone.decompose import build_split
from comonotone.kernels import gamma, jackson_eval, jackson_poly, make_kernel
from comonotone.operators import (
    AdmissibilityWarning,
    CorrectionContext,
    assemble_tau,
    build_Ki,
    build_theta,
    derivative_at,
    resolve_constants,
)
from comonotone.partition import UniformGrid, build_partition, find_N, find_N1
from comonotone.step import build_step, step_sup_error
from comonotone.trigpoly import BreakpointSet, LinearPlusTrig, TrigPoly, make_pi
from comonotone.verify import fit_rate

TWO_PI = 2.0 * np.pi
HALF_PI = 0.5 * np.pi
RESULTS = {}


def report(k, ok, detail):
    line = f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}"
    RESULTS[k] = line
    print(line)
    assert ok, line


@pytest.fixture(autouse=True)
def _quiet():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", AdmissibilityWarning)
        yield


def test_criterion_1_kernels():
    t0 = time.perf_counter()
    mass_err = leak = 0.0
    degree_ok = True
    drift = 1.0
    for l in range(2, 7):
        ratios = []
        for n in (2, 4, 8, 16, 32, 64):
            spec = make_kernel(l, n)
            p = jackson_poly(spec)
            degree_ok &= p.degree == l * (n - 1)
            mass_err = max(mass_err, abs(TWO_PI * p.mean() - 1.0))
            D = p.degree + 6
            N = 2 * D + 1
            t = -np.pi + TWO_PI * np.arange(N) / N
            leak = max(leak, TrigPoly.from_samples(jackson_eval(spec, t), degree=D).tail(p.degree))
            ratios.append(gamma(l, n) / n ** (2 * l - 1))
        drift = max(drift, max(ratios) / min(ratios))
    secs = time.perf_counter() - t0
    ok = mass_err <= 1e-10 and degree_ok and leak < 1e-10 and drift < 2.0 and secs < 60
    report(
        1,
        ok,
        f"max|mass-1|={mass_err:.1e} degrees={'ok' if degree_ok else 'wrong'} "
        f"leakage={leak:.1e} gamma/n^(2l-1) spread={drift:.3f}x runtime={secs:.1f}s",
    )


def test_criterion_2_steps():
    t0 = time.perf_counter()
    Y = BreakpointSet([HALF_PI, -HALF_PI])
    Pi = make_pi(Y)
    l = Y.s + 2
    d_lo, d_hi, slope_err, sign_worst = np.inf, -np.inf, 0.0, 0.0
    exponents = []
    for n in (16, 32, 64, 128):
        for xs in (0.0, 0.3, -0.7, 2.5):
            T = build_step(l, n, xs, Y)
            d_lo, d_hi = min(d_lo, T.d), max(d_hi, T.d)
            slope_err = max(slope_err, abs(T.value.slope - 1.0 / TWO_PI))
            x = np.linspace(-np.pi, np.pi, 8 * T.degree + 1)
            prod = T.pi_center * T.derivative()(x) * Pi(x)
            sign_worst = min(sign_worst, prod.min() / np.abs(prod).max())
        if n >= 32:
            exponents.append(step_sup_error(build_step(l, n, 0.0, Y)))
    target = 2 * (l - Y.s) - 1 - 0.5
    secs = time.perf_counter() - t0
    ok = 0.4 < d_lo and d_hi < 1.6 and slope_err <= 1e-10 and sign_worst >= -1e-10
    ok = ok and min(exponents) >= target and secs < 120
    report(
        2,
        ok,
        f"d in [{d_lo:.3f}, {d_hi:.3f}] slope err={slope_err:.1e} sign={sign_worst:.1e} "
        f"decay exponent min={min(exponents):.2f} (need >= {target}) runtime={secs:.1f}s",
    )


def _c2_series(e, r, ns):
    out = {}
    for n in ns:
        st = build_partition(e.fprime, r, n)
        if not st.Omega.any() or st.Omega.all():
            continue
        g = st.grid
        j = g.indices()[st.Omega]
        x = (g.x(j)[:, None] + g.h * np.linspace(0, 1, 33)[None, :]).ravel()
        out[n] = float(np.abs(e.fprime(x)).max() / g.h ** (r - 1))
    return out


def test_criterion_3_partition():
    ns = (16, 32, 64, 128, 256)
    lemma2_ok = chain_ok = True
    c2_lines, c2_ok = [], True
    for e in corpus():
        for r in (2, 3):
            if r > e.r_max:
                continue
            for n in ns:
                st = build_partition(e.fprime, r, n)
                lemma2_ok &= st.max_type3_run() <= 2 * r - 4
                for a, b in ((st.M, st.M1), (st.M1, st.M2), (st.M2, st.Omega)):
                    chain_ok &= bool(np.all(~a | b))
            c2 = _c2_series(e, r, ns)
            if len(c2) >= 2:
                spread = max(c2.values()) / min(c2.values())
                # +-20% around a common value allows a max/min ratio of 1.5
                stable = spread <= 1.5
                c2_ok &= stable
                c2_lines.append(f"{e.id}/r={r}:{min(c2.values()):.1f}-{max(c2.values()):.1f}{'' if stable else '!'}")
    ok = lemma2_ok and chain_ok and c2_ok
    report(
        3,
        ok,
        f"lemma2={'ok' if lemma2_ok else 'violated'} chain={'ok' if chain_ok else 'broken'} "
        f"c2 ranges [{' '.join(c2_lines)}] ('!' = spread > 1.5)",
    )


def test_criterion_4_decomposition():
    worst_sign, exact_ok, per = 0.0, True, 0.0
    cases = [("neg_sin", 2, 64), ("neg_sin", 3, 64), ("neg_sin_warped", 2, 128), ("two_pair", 2, 64)]
    for fid, r, n in cases:
        e = get_entry(fid)
        part = build_partition(e.fprime, r, n, e.Y)
        sp = build_split(e.f, e.fprime, part)
        x = -np.pi + TWO_PI * (np.arange(100_000) + 0.5) / 100_000
        g1, fp, Pi = sp.g1(x), e.fprime(x), make_pi(e.Y)(x)
        scale = np.abs(fp * Pi).max()
        worst_sign = min(worst_sign, (g1 * Pi).min() / scale, ((fp - g1) * Pi).min() / scale)
        g = part.grid
        pos = g.pos(np.clip(g.index_of(x), -n + 1, n))
        exact_ok &= bool(np.all(g1[part.M1[pos]] == fp[part.M1[pos]]))
        exact_ok &= bool(np.all(g1[~part.M2[pos]] == 0.0))
        xs = np.linspace(-np.pi, np.pi, 1001)
        per = max(per, np.abs(sp.tildeG2(xs + TWO_PI) - sp.tildeG2(xs)).max())
    ok = worst_sign >= -1e-12 and exact_ok and per <= 1e-9
    report(
        4,
        ok,
        f"sign split min={worst_sign:.1e} exact on M*/off M**={'yes' if exact_ok else 'no'} "
        f"tildeG2 periodicity={per:.1e}",
    )


def _bernoulli(r):
    from math import factorial

    B = {2: [1.0, -1.5, 0.5, 0.0], 3: [1.0, -2.0, 1.0, 0.0, -1.0 / 30.0]}[r]
    scale = TWO_PI ** (r + 1) / factorial(r + 1) / np.pi

    def t(x):
        return np.mod(np.asarray(x, dtype=float) + np.pi, TWO_PI) / TWO_PI

    return (lambda x: scale * np.polyval(B, t(x))), (lambda x: scale * np.polyval(np.polyder(B), t(x)) / TWO_PI)


def test_criterion_5_theta():
    x = np.linspace(-np.pi, np.pi, 20001)
    const_err = max(
        np.abs(build_theta(16, r + 4, r, lambda u: np.full_like(u, 1.25))(x) - 1.25).max() for r in (2, 3)
    )
    parts, ok = [], const_err <= 1e-12
    for r in (2, 3):
        G, dG = _bernoulli(r)
        v, dv = [], []
        for n2 in (16, 32, 64):
            th = build_theta(n2, r + 6, r, G)
            v.append(np.abs(G(x) - th(x)).max() * n2**r)
            dv.append(np.abs(dG(x) - th.derivative()(x)).max() * n2 ** (r - 1))
        ok &= max(v) / min(v) <= 2.0 and max(dv) / min(dv) <= 2.0
        parts.append(f"r={r}: |G-Theta|n2^r {min(v):.2f}-{max(v):.2f}, |G'-Theta'|n2^(r-1) {min(dv):.2f}-{max(dv):.2f}")
    report(5, ok, f"constant err={const_err:.1e}; " + "; ".join(parts))


E2E_N = (32, 64, 128, 256)


@pytest.fixture(scope="module")
def e2e():
    out = {}
    t0 = time.perf_counter()
    for fid, r in (("neg_sin", 2), ("neg_sin", 3), ("neg_sin_warped", 2)):
        e = get_entry(fid)
        out[(fid, r)] = [assemble_tau(e.f, e.fprime, e.Y, r, n, return_parts=True) for n in E2E_N]
    out["seconds"] = time.perf_counter() - t0
    return out


def test_criterion_6_end_to_end(e2e):
    ok, parts = e2e["seconds"] < 600, []
    for (fid, r), runs in ((k, v) for k, v in e2e.items() if k != "seconds"):
        e = get_entry(fid)
        res = [a for a, _ in runs]
        margin = min(a.comonotonicity_margin for a in res)
        fit = fit_rate(E2E_N, [a.sup_error for a in res])
        deg_ok = all(a.degree <= 16 * (e.Y.s + 2) * a.n for a in res)
        good = margin >= -1e-9 and fit.slope <= -(r - 0.5) and fit.r_squared >= 0.95 and deg_ok
        ok &= good
        parts.append(
            f"{fid}/r={r}: margin={margin:.1e} slope={fit.slope:.2f} r2={fit.r_squared:.3f} "
            f"max degree={max(a.degree for a in res)}{'' if good else ' !'}"
        )
    report(6, ok, "; ".join(parts) + f"; runtime={e2e['seconds']:.0f}s")


def test_criterion_7_cancellation(e2e):
    worst_pipe, residue = 0.0, 0.0
    for key, runs in e2e.items():
        if key == "seconds":
            continue
        for res, _ in runs:
            worst_pipe = max([worst_pipe] + res.diagnostics.get("cancellation", []))
            residue = max(residue, res.diagnostics["linear_residue"])
    # the corpus R' nearly vanishes at y_i; a synthetic R exercises both K branches
    worst_syn, built = 0.0, 0
    R = LinearPlusTrig(0.0, TrigPoly(0.0, [0.0, 0.0, 1e-3], [0.0, 0.0, 2e-3]))
    x = np.linspace(-np.pi, np.pi, 8001)
    sup = np.abs(R.derivative()(x)).max()
    for fid in ("neg_sin", "two_pair"):
        e = get_entry(fid)
        for n in (32, 64, 128):
            ctx = CorrectionContext(UniformGrid(n), e.Y, resolve_constants(e.Y.s, 2))
            for i in range(1, 2 * e.Y.s + 1):
                try:
                    K, _ = build_Ki(i, R, ctx)
                except ValueError:
                    continue
                built += 1
                y = e.Y.y(i)
                worst_syn = max(worst_syn, abs(derivative_at(R, y) + derivative_at(K, y)) / sup)
    ok = worst_pipe <= 1e-9 and worst_syn <= 1e-9 and residue < 1e-8
    report(
        7,
        ok,
        f"pipeline |R'+K'|/sup|R'|={worst_pipe:.1e} synthetic ({built} corrections)={worst_syn:.1e} "
        f"linear residue={residue:.1e}",
    )


def _extreme(f, sign):
    """Global max (``sign=1``) or min (``sign=-1``) of ``f``: dense samples, then Brent from the best one."""
    xs = np.linspace(-np.pi, np.pi, 100001)
    k = int(np.argmax(sign * f(xs)))
    res = minimize_scalar(
        lambda t: -sign * float(f(t)), bounds=(xs[k] - 1e-4, xs[k] + 1e-4), method="bounded", options={"xatol": 1e-13}
    )
    return sign * max(sign * f(xs[k]), -res.fun)


def test_criterion_8_fallback():
    ok, checked = True, 0
    for e in corpus():
        N2 = max(find_N(e.Y)[0], find_N1(e.Y))
        half = 0.5 * (_extreme(e.f, +1) - _extreme(e.f, -1))
        for n in range(1, N2 + 1):
            res = assemble_tau(e.f, e.fprime, e.Y, 2, n)
            checked += 1
            ok &= res.fallback and res.tau.degree == 0 and res.comonotonicity_margin == 0.0
            ok &= res.sup_error <= half + 1e-12
    report(8, ok, f"{checked} (entry, n <= N2) cases constant, margin 0, error <= half-range")


def test_criterion_9_oracles():
    rng = np.random.default_rng(7)
    entries = [e for e in corpus() if e.r_max >= 2]
    dd = lemma1_trials(entries, rng, trials=1000)
    fired, worst = 0, 0.0
    for r in (2, 3):
        for n in (16, 64, 256):
            for e in corpus():
                t, w = extension_checks(e.fprime, r, n)
                fired, worst = fired + t, max(worst, w)
        for _ in range(100):
            n = int(rng.choice([16, 32, 64]))
            om, A, ph = rng.uniform(0.5, 3.0) * n, rng.uniform(0.1, 1.0), rng.uniform(0, TWO_PI)
            t, w = extension_checks(lambda x: A * np.sin(om * x + ph) / om ** (r - 1), r, n)
            fired, worst = fired + t, max(worst, w)
    ok = dd <= 1.0 + 1e-9 and worst <= 1.0 and fired > 0
    report(
        9,
        ok,
        f"max |dd|*(r-1)! over 1000 node sets={dd:.3f}; extension windows fired={fired}, "
        f"max |g|/(c1 h^(r-1))={worst:.3f}",
    )

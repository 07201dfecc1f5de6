import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from comonotone.trigpoly import (
    BreakpointSet,
    LinearPlusTrig,
    TrigPoly,
    make_pi,
    pi_direct,
)

TWO_PI = 2.0 * np.pi

coeffs = st.lists(st.floats(-5, 5, allow_nan=False), min_size=1, max_size=8)


def _poly(vals):
    d = (len(vals) - 1) // 2
    return TrigPoly(vals[0], vals[1 : d + 1], vals[d + 1 : 2 * d + 1])


def _random_poly(rng, degree):
    return TrigPoly(rng.normal(), rng.normal(size=degree), rng.normal(size=degree))


def _brute(p, x):
    # independent evaluation straight from the definition
    k = np.arange(1, p.degree + 1)
    return p.a0 + sum(p.a[i] * np.cos(k[i] * x) + p.b[i] * np.sin(k[i] * x) for i in range(p.degree))


class TestEval:
    @pytest.mark.parametrize(
        "p, x, expected",
        [
            (TrigPoly.constant(1.0), 0.7, 1.0),
            (TrigPoly.cos(1), 0.0, 1.0),
            (make_pi([0.5 * np.pi, -0.5 * np.pi]), 0.0, -0.5),
        ],
    )
    def test_examples(self, p, x, expected):
        assert p(x) == pytest.approx(expected, abs=1e-15)

    @pytest.mark.parametrize("degree", [0, 1, 5, 40])
    def test_matches_definition(self, rng, degree):
        p = _random_poly(rng, degree)
        x = rng.uniform(-10, 10, 200)
        np.testing.assert_allclose(p(x), _brute(p, x), atol=1e-11 * max(1.0, p.coefficient_norm()))

    def test_horner_branch_matches_dense(self, rng):
        p = _random_poly(rng, 300)
        x = rng.uniform(-np.pi, np.pi, 8000)  # above the dense-product size limit
        np.testing.assert_allclose(p(x), _brute(p, x), atol=1e-10 * p.coefficient_norm())

    @given(coeffs, st.floats(-50, 50))
    def test_periodic(self, vals, x):
        p = _poly(vals)
        assert abs(p(x + TWO_PI) - p(x)) <= 1e-10 * max(1.0, p.coefficient_norm())

    @pytest.mark.parametrize("N", [5, 64, 101])
    def test_eval_uniform(self, rng, N):
        p = _random_poly(rng, 12)
        x = -np.pi + TWO_PI * np.arange(N) / N
        np.testing.assert_allclose(p.eval_uniform(N), p(x), atol=1e-12 * p.coefficient_norm())


class TestCalculus:
    @pytest.mark.parametrize(
        "p, expected",
        [
            (TrigPoly.constant(3.0), TrigPoly.zero()),
            (TrigPoly.sin(1), TrigPoly.cos(1)),
            (TrigPoly.cos(3), TrigPoly.sin(3, -3.0)),
        ],
    )
    def test_derivative_examples(self, p, expected):
        d = p.derivative()
        x = np.linspace(-3, 3, 17)
        np.testing.assert_allclose(d(x), expected(x), atol=1e-14)

    def test_derivative_against_finite_difference(self, rng):
        p = _random_poly(rng, 6)
        x = rng.uniform(-np.pi, np.pi, 50)
        eps = 1e-6
        fd = (p(x + eps) - p(x - eps)) / (2 * eps)
        np.testing.assert_allclose(p.derivative()(x), fd, atol=1e-6)

    @pytest.mark.parametrize(
        "p, slope, periodic",
        [
            (TrigPoly.constant(1.0), 1.0, TrigPoly.zero()),
            (TrigPoly.cos(1), 0.0, TrigPoly.sin(1)),
            (TrigPoly.sin(2), 0.0, TrigPoly.cos(2, -0.5)),
        ],
    )
    def test_antiderivative_examples(self, p, slope, periodic):
        F = p.antiderivative_split()
        assert F.slope == pytest.approx(slope)
        x = np.linspace(-3, 3, 11)
        np.testing.assert_allclose(F.periodic(x), periodic(x), atol=1e-15)

    @given(coeffs)
    def test_antiderivative_inverts_derivative(self, vals):
        p = _poly(vals)
        F = p.antiderivative_split()
        x = np.linspace(-np.pi, np.pi, 9)
        np.testing.assert_allclose(F.derivative()(x), p(x), atol=1e-10 * max(1.0, p.coefficient_norm()))

    def test_linear_plus_trig_period_increment(self, rng):
        L = LinearPlusTrig(0.3, _random_poly(rng, 4))
        x = rng.uniform(-5, 5, 20)
        np.testing.assert_allclose(L(x + TWO_PI) - L(x), TWO_PI * 0.3, atol=1e-12)


class TestSamples:
    def test_constant(self):
        p = TrigPoly.from_samples(np.full(9, 2.5))
        assert p.a0 == pytest.approx(2.5)
        assert np.abs(p.a).max() < 1e-15 and np.abs(p.b).max() < 1e-15

    @pytest.mark.parametrize("M", [2, 3, 7])
    def test_cos2(self, M):
        N = 2 * M + 1
        x = -np.pi + TWO_PI * np.arange(N) / N
        p = TrigPoly.from_samples(np.cos(2 * x))
        expected = np.zeros(M)
        expected[1] = 1.0
        np.testing.assert_allclose(p.a, expected, atol=1e-14)
        np.testing.assert_allclose(p.b, 0.0, atol=1e-14)

    def test_pi_two_pairs_against_symbolic_expansion(self, Y2):
        # sin((x-u)/2) sin((x-v)/2) = (cos((u-v)/2) - cos(x - (u+v)/2)) / 2, multiplied out by hand
        def pair(u, v):
            return 0.5 * np.cos(0.5 * (u - v)), -0.5 * np.cos(0.5 * (u + v)), -0.5 * np.sin(0.5 * (u + v))

        c0, c1, s1 = pair(2.0, 0.5)
        e0, e1, t1 = pair(-1.0, -2.0)
        # (c0 + c1 cos + s1 sin)(e0 + e1 cos + t1 sin)
        a0 = c0 * e0 + 0.5 * (c1 * e1 + s1 * t1)
        a1 = c0 * e1 + e0 * c1
        b1 = c0 * t1 + e0 * s1
        a2 = 0.5 * (c1 * e1 - s1 * t1)
        b2 = 0.5 * (c1 * t1 + s1 * e1)
        N = 2 * 4 + 1
        x = -np.pi + TWO_PI * np.arange(N) / N
        p = TrigPoly.from_samples(pi_direct(Y2, x), degree=4)
        np.testing.assert_allclose([p.a0, *p.a[:2], *p.b[:2]], [a0, a1, a2, b1, b2], atol=1e-12)
        np.testing.assert_allclose(p.a[2:], 0.0, atol=1e-12)

    def test_too_few_samples(self):
        with pytest.raises(ValueError):
            TrigPoly.from_samples(np.ones(5), degree=3)


class TestMultiply:
    def test_identity(self, rng):
        p = _random_poly(rng, 5)
        q = p.multiply(TrigPoly.constant(1.0))
        x = rng.uniform(-3, 3, 20)
        np.testing.assert_allclose(q(x), p(x), atol=1e-13)

    @pytest.mark.parametrize(
        "p, q, expected",
        [
            (TrigPoly.cos(1), TrigPoly.cos(1), TrigPoly(0.5, [0.0, 0.5], [0.0, 0.0])),
            (TrigPoly.sin(1), TrigPoly.cos(1), TrigPoly(0.0, [0.0, 0.0], [0.0, 0.5])),
        ],
    )
    def test_examples(self, p, q, expected):
        r = p.multiply(q)
        np.testing.assert_allclose([r.a0, *r.a, *r.b], [expected.a0, *expected.a, *expected.b], atol=1e-15)

    @pytest.mark.parametrize("dp, dq", [(3, 4), (100, 900)])
    def test_pointwise_product(self, rng, dp, dq):
        p, q = _random_poly(rng, dp), _random_poly(rng, dq)
        r = p.multiply(q)
        assert r.degree == dp + dq
        x = rng.uniform(-np.pi, np.pi, 50)
        scale = p.coefficient_norm() * q.coefficient_norm()
        np.testing.assert_allclose(r(x), p(x) * q(x), atol=1e-12 * scale)

    def test_shift(self, rng):
        p = _random_poly(rng, 7)
        x = rng.uniform(-3, 3, 20)
        np.testing.assert_allclose(p.shift(0.4)(x), p(x - 0.4), atol=1e-12)


class TestBreakpoints:
    def test_ordering_and_extension(self, Y2):
        assert np.all(np.diff(Y2.points) < 0)
        for i in range(-6, 7):
            assert Y2.y(i) - Y2.y(i + 4) == pytest.approx(TWO_PI)

    @pytest.mark.parametrize("pts", [[0.1], [0.1, 0.1], [0.0, np.pi], []])
    def test_rejects(self, pts):
        with pytest.raises(ValueError):
            BreakpointSet(pts)


class TestMakePi:
    @pytest.mark.parametrize(
        "Y, expected",
        [
            ([0.5 * np.pi, -0.5 * np.pi], lambda x: -0.5 * np.cos(x)),
            ([0.0, -np.pi], lambda x: 0.5 * np.sin(x)),
        ],
    )
    def test_closed_forms(self, Y, expected):
        x = np.linspace(-np.pi, np.pi, 31)
        np.testing.assert_allclose(make_pi(Y)(x), expected(x), atol=1e-15)

    def test_two_pairs_direct_product(self, Y2):
        expected = np.sin(1.0) * np.sin(0.5) * np.sin(-0.25) * np.sin(-1.0)
        assert make_pi(Y2)(0.0) == pytest.approx(expected, abs=1e-15)

    def test_zeros_and_sign_changes(self, Y2):
        Pi = make_pi(Y2)
        assert Pi.degree == Y2.s
        for y in Y2.points:
            assert abs(Pi(y)) < 1e-14
            assert Pi(y - 1e-4) * Pi(y + 1e-4) < 0

    @given(st.lists(st.floats(-3.1, 3.1), min_size=2, max_size=6, unique=True).filter(lambda v: len(v) % 2 == 0))
    @settings(max_examples=50)
    def test_matches_direct_product(self, pts):
        if np.min(np.diff(np.sort(pts))) < 1e-6:
            return
        x = np.linspace(-np.pi, np.pi, 13)
        np.testing.assert_allclose(make_pi(pts)(x), pi_direct(pts, x), atol=1e-13)

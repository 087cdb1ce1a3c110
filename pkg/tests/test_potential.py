import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qpspec.potential import TrigMatrix, TrigPolynomial, amo_potential, analytic_norm, evaluate, truncate


coef = st.floats(-2, 2, allow_nan=False)
complex_coef = st.builds(complex, coef, coef)
series = st.lists(complex_coef, min_size=1, max_size=6).map(
    lambda cs: TrigPolynomial.from_coeffs({n - len(cs) // 2: v for n, v in enumerate(cs)}))
real_series_st = st.lists(complex_coef, min_size=1, max_size=5).map(
    lambda cs: TrigPolynomial.from_coeffs(
        {0: complex(cs[0].real)} | {n: v for n, v in enumerate(cs) if n}
        | {-n: v.conjugate() for n, v in enumerate(cs) if n}))


def test_amo_norms():
    assert analytic_norm(amo_potential(0.5), 0.0) == pytest.approx(1.0)
    assert analytic_norm(TrigPolynomial.constant(-3.0), 0.7) == pytest.approx(3.0)
    lam, h = 0.5, 0.1
    bound = analytic_norm(amo_potential(lam), h)
    assert bound == pytest.approx(2 * lam * math.exp(0.2 * math.pi))
    x = np.linspace(0, 1, 2001)
    sup = np.abs(amo_potential(lam).evaluate(x + 1j * h)).max()
    assert sup == pytest.approx(2 * lam * math.cosh(0.2 * math.pi), rel=1e-6)
    assert sup <= bound


def test_amo_evaluation():
    V = amo_potential(0.7)
    assert evaluate(V, 0.0) == pytest.approx(1.4)
    assert abs(evaluate(V, 0.25)) < 1e-15
    assert abs(evaluate(amo_potential(0.5), 0.25)) < 1e-15
    one = amo_potential(1.0)
    assert one[1] == one[-1] == 1
    assert analytic_norm(amo_potential(0.0)) == 0


def test_evaluate_matches_direct_sum():
    rng = np.random.default_rng(3)
    c = rng.normal(size=7) + 1j * rng.normal(size=7)
    f = TrigPolynomial.from_coeffs({n: c[n + 3] for n in range(-3, 4)})
    z = 0.3
    direct = sum(c[n + 3] * complex(math.cos(2 * math.pi * n * z), math.sin(2 * math.pi * n * z))
                 for n in reversed(range(-3, 4)))
    assert abs(f.evaluate(z) - direct) < 1e-14


def test_truncate_examples():
    V = amo_potential(0.3)
    same, tail = truncate(V, 5)
    assert same is V and tail == 0
    zero, tail = truncate(V, 0)
    assert analytic_norm(zero) == 0 and tail == pytest.approx(0.6)
    f = TrigPolynomial.from_coeffs({-2: 0.25, -1: 1.0, 1: 1.0, 2: 0.25})
    g, tail = truncate(f, 1)
    assert g.coeffs == {-1: 1, 1: 1} and tail == pytest.approx(0.5)


def test_period_two_series():
    f = TrigPolynomial.from_coeffs({1: 0.5, -1: 0.5}, period=2)
    assert f.evaluate(1.0) == pytest.approx(-1.0)
    assert analytic_norm(f, 0.1) == pytest.approx(math.exp(math.pi * 0.1))


def test_json_roundtrip():
    f = TrigPolynomial.from_coeffs({-2: 0.1 - 0.2j, 0: 1.5, 2: 0.1 + 0.2j})
    g = TrigPolynomial.from_json(f.to_json())
    assert np.array_equal(f.c, g.c) and g.reality


@given(series, series, st.floats(0, 0.3))
def test_norm_submultiplicative(f, g, h):
    assert analytic_norm(f * g, h) <= analytic_norm(f, h) * analytic_norm(g, h) * (1 + 1e-12) + 1e-300


@given(series, st.floats(0, 0.3), st.floats(0, 0.3))
def test_norm_monotone_in_h(f, h1, h2):
    lo, hi = sorted((h1, h2))
    assert analytic_norm(f, lo) <= analytic_norm(f, hi)


@given(real_series_st, st.floats(0, 1))
def test_real_series_real_on_torus(f, x):
    assert f.reality
    v = f.evaluate(np.array([x]).astype(complex))
    assert abs(v.imag[0]) <= 1e-13 * max(analytic_norm(f), 1e-300) + 1e-300


@given(series, st.floats(0, 1))
def test_shift(f, a):
    x = np.linspace(0, 1, 7)
    assert np.allclose(f.shift(a).evaluate(x), f.evaluate(x + a), atol=1e-12)


def test_trig_matrix_product_and_grid():
    rng = np.random.default_rng(0)
    A = TrigMatrix(rng.normal(size=(5, 2, 2)) + 1j * rng.normal(size=(5, 2, 2)))
    B = TrigMatrix(rng.normal(size=(3, 2, 2)))
    x = np.linspace(0, 1, 9)
    assert np.allclose((A @ B).evaluate(x), A.evaluate(x) @ B.evaluate(x))
    G = TrigMatrix.from_grid(A.evaluate(np.arange(16) / 16), 1)
    assert np.allclose(G.pad(2), A.c)
    assert A.analytic_norm(0.1) >= np.abs(A.evaluate(x + 0.1j)).sum(axis=-1).max() - 1e-12

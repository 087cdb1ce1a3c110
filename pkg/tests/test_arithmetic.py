import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qpspec.arithmetic import (alpha_from_quotients, beta_estimate, cf_expand, dio_estimate,
                               golden, parse_frequency, sdc_check, sqrt2m1, torus_norm)
from qpspec.errors import RationalInput


def test_golden_quotients_are_fibonacci():
    f = cf_expand((mpmath.sqrt(5) - 1) / 2, 6)
    assert f.a == (1, 1, 1, 1, 1, 1)
    assert f.q[:6] == (1, 1, 2, 3, 5, 8)


def test_silver_quotients():
    f = cf_expand(mpmath.sqrt(2) - 1, 4)
    assert f.a == (2, 2, 2, 2)
    assert f.q[:4] == (1, 2, 5, 12)


def test_rational_input_rejected():
    with pytest.raises(RationalInput):
        cf_expand(0.5, 10)


def test_convergent_recurrence(gold):
    p, q, a = gold.p, gold.q, gold.a
    assert (p[0], p[1], q[0], q[1]) == (0, 1, 1, a[0])
    for k in range(2, len(q)):
        assert p[k] == a[k - 1] * p[k - 1] + p[k - 2]
        assert q[k] == a[k - 1] * q[k - 1] + q[k - 2]
    assert all(q[k + 1] > q[k] for k in range(1, len(q) - 1))


@pytest.mark.parametrize("make", [golden, sqrt2m1])
def test_beta_small_for_bounded_quotients(make):
    assert beta_estimate(make(20)) <= 0.05


def test_beta_sees_huge_quotient():
    a = [1, 1, 1, 1, 10**6] + [1] * 15
    f = cf_expand(alpha_from_quotients(a, 256), 20, 256)
    assert f.a[4] == 10**6
    q4 = f.q[4]
    assert beta_estimate(f, n0=2) >= math.log(10**6) / q4


def test_dio_estimate_examples(gold):
    d = dio_estimate(gold, 1.0, 100)
    assert 0 < d.gamma < 1
    assert d.k_min in {1, 2, 3, 5, 8, 13, 21, 34, 55, 89}
    ks = np.arange(1, 101)
    brute = np.min(np.abs(ks * gold.value - np.round(ks * gold.value)) * ks)
    assert d.gamma == pytest.approx(brute, rel=1e-12)
    assert dio_estimate(gold, 1.0, 1).gamma == pytest.approx(torus_norm(gold.value))
    assert dio_estimate(gold, 2.0, 100).gamma >= d.gamma


def test_torus_norm_examples():
    assert torus_norm(0.7) == pytest.approx(0.3)
    assert torus_norm(-0.2) == pytest.approx(0.2)
    assert torus_norm(1.5) == pytest.approx(0.5)
    assert np.allclose(torus_norm(np.array([0.7, -0.2, 1.5])), [0.3, 0.2, 0.5])


@pytest.mark.parametrize("make", [golden, sqrt2m1])
def test_convergent_gap_inequality(make):
    f = make()
    with mpmath.workprec(f.prec):
        for n in range(1, f.depth):
            d = torus_norm(f.q[n] * f.alpha)
            assert 1 / (2 * mpmath.mpf(f.q[n + 1])) <= d <= 1 / mpmath.mpf(f.q[n + 1])


def test_best_approximation(gold):
    for n in range(2, 14):
        qn, qprev = gold.q[n], gold.q[n - 1]
        ks = np.arange(1, qn)
        assert gold.torus_norm_multiples(ks).min() >= gold.torus_norm_multiples([qprev])[0] - 1e-15


def test_frac_multiples_large_k(gold):
    ks = np.array([10**9 + 7, 3 * 10**11])
    with mpmath.workprec(200):
        exact = [float(mpmath.frac(int(k) * gold.alpha)) for k in ks]
    assert np.allclose(gold.frac_multiples(ks), exact, atol=1e-12)


def test_sdc_check(gold):
    assert sdc_check(gold, 0.1, 1.0, 1000)
    assert not sdc_check(gold, 10.0, 1.0, 1000)


def test_parse_frequency_presets():
    assert parse_frequency("golden").a[:5] == (1, 1, 1, 1, 1)
    assert parse_frequency("silver").a[:5] == (2, 2, 2, 2, 2)
    assert parse_frequency("0.41421356237309504880168872", depth=10).a[:5] == (2, 2, 2, 2, 2)


@given(st.lists(st.integers(1, 50), min_size=6, max_size=12))
def test_reconstruction_roundtrip(quotients):
    alpha = alpha_from_quotients(quotients + [1] * 30, 256)
    f = cf_expand(alpha, len(quotients), 256)
    assert list(f.a) == quotients
    with mpmath.workprec(256):
        back = alpha_from_quotients(f.a, 256)
        assert abs(back - alpha) <= 1 / mpmath.mpf(f.q[-1]) ** 2

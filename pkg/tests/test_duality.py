import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qpspec.arithmetic import torus_norm
from qpspec.duality import (accurate_eigenvector, bloch_residual, dual_matrix, dual_spectrum,
                            eigenvector_decay, nonresonant_phase, points_as_bands, resonances,
                            strip_growth, write_decay_profile)
from qpspec.errors import Delocalized
from qpspec.potential import TrigPolynomial, amo_potential
from qpspec.spectrum import approximant_bands, hausdorff_distance


@pytest.fixture(scope="module")
def theta(gold):
    return nonresonant_phase(gold)


def schrodinger_matrix(lam, freq, theta, n):
    m = (n - 1) // 2
    j = np.arange(-m, m + 1)
    H = np.diag(2 * lam * np.cos(2 * np.pi * (theta + j * freq.value)))
    return H + np.diag(np.ones(n - 1), 1) + np.diag(np.ones(n - 1), -1)


def test_dual_of_amo_is_scaled_schrodinger(gold):
    lam = 0.7
    op = dual_matrix(amo_potential(lam), gold, 0.3, 41)
    assert np.allclose(op.matrix, lam * schrodinger_matrix(1 / lam, gold, 0.3, 41), atol=1e-12)
    assert op.bandwidth == 1


def test_dual_of_zero_is_diagonal(gold):
    op = dual_matrix(TrigPolynomial.constant(0.0), gold, 0.1, 21)
    assert np.count_nonzero(op.matrix - np.diag(np.diag(op.matrix))) == 0


def test_dual_rejects_bad_size(gold):
    with pytest.raises(ValueError):
        dual_matrix(amo_potential(1.0), gold, 0.1, 20)


@given(st.floats(0, 1), st.integers(0, 3))
def test_dual_symmetric(theta, extra):
    from qpspec.arithmetic import golden
    V = TrigPolynomial.from_coeffs({0: 0.2, 1: 0.3, -1: 0.3, 2: 0.1 * extra, -2: 0.1 * extra})
    op = dual_matrix(V, golden(), theta, 31)
    assert np.array_equal(op.matrix, op.matrix.T)


def test_resonance_examples(gold):
    assert 1 in resonances(gold.value / 2, gold, 0.1, 50).entries
    assert resonances(0.0, gold, 0.05, 100).entries == ()


def brute_resonances(theta, freq, eps0, K):
    d = {k: torus_norm(2 * theta - k * freq.value) for k in range(-K, K + 1)}
    out = []
    for k in sorted(d, key=lambda k: (abs(k), k)):
        if k == 0:
            continue
        if d[k] <= math.exp(-eps0 * abs(k)) and all(d[k] <= d[l] for l in range(-abs(k), abs(k) + 1)):
            out.append(k)
    return tuple(out)


@given(st.floats(0, 1), st.floats(0.01, 0.5))
def test_resonances_match_brute_force(theta, eps0):
    from qpspec.arithmetic import golden
    f = golden()
    rl = resonances(theta, f, eps0, 60)
    assert rl.entries == brute_resonances(theta, f, eps0, 60)
    assert rl.check(f)


def test_localized_decay_rate(gold, theta):
    fit = eigenvector_decay(dual_matrix(amo_potential(0.25), gold, theta, 401))
    assert fit.rate == pytest.approx(math.log(4), rel=0.15)


def test_diagonal_dual_rate_is_infinite(gold, theta):
    assert eigenvector_decay(dual_matrix(TrigPolynomial.constant(1.0), gold, theta, 41)).rate == math.inf


def test_extended_side_is_delocalized(gold, theta):
    op = dual_matrix(amo_potential(4.0), gold, theta, 401)
    for i in (100, 200, 300):
        with pytest.raises(Delocalized):
            eigenvector_decay(op, i)


def test_decay_profile_csv(gold, theta, tmp_path):
    op = dual_matrix(amo_potential(0.25), gold, theta, 101)
    fit = eigenvector_decay(op)
    p = tmp_path / "d.csv"
    write_decay_profile(fit, op, p)
    lines = p.read_text().splitlines()
    assert lines[0] == "j,log_abs_u" and len(lines) == 102


def test_bloch_constant_wave(gold):
    th = 0.3
    res, tail = bloch_residual(np.array([1.0]), th, TrigPolynomial.constant(0.0),
                               2 * math.cos(2 * math.pi * th), gold, 0.2)
    assert res < 1e-14


def test_bloch_localized_eigenvector(gold, theta):
    V = amo_potential(0.25)
    op = dual_matrix(V, gold, theta, 401)
    fit = eigenvector_decay(op)
    u = accurate_eigenvector(op, fit.energy, fit.center)
    y = 0.5 * fit.rate / (2 * math.pi)
    errs = []
    for W in (20, 40, 80):
        sl = slice(fit.center - W, fit.center + W + 1)
        errs.append(bloch_residual(u[sl], theta, V, fit.energy, gold, y, sites=op.sites[sl])[0])
    assert errs[-1] <= 1e-4
    assert errs[0] >= errs[1] >= errs[2] or errs[0] < 1e-12


@pytest.mark.parametrize("lam", [0.5, 2.0])
def test_dual_spectrum_matches_scaled_bands(gold, lam):
    pts = dual_spectrum(dual_matrix(amo_potential(lam), gold, 0.1234, 2001))
    b = approximant_bands(amo_potential(1 / lam), (55, 89)).scaled(lam)
    assert hausdorff_distance(points_as_bands(pts), b) <= 0.05


def test_subexponential_growth_on_strip(gold):
    V = amo_potential(0.5)
    from conftest import band_midpoints
    y = 0.8 * math.log(2) / (2 * math.pi)
    for E in band_midpoints(0.5, 3):
        assert strip_growth(V, E, gold, y) <= 0.01

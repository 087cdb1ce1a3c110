import io

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import amo_bands
from qpspec.errors import AmbiguousLabel
from qpspec.potential import TrigPolynomial, amo_potential
from qpspec.spectrum import (BandSet, approximant_bands, approximant_ids, band_measure, butterfly_sweep,
                             detect_gaps, hausdorff_distance, label_gaps, merge_intervals)


def bloch_oracle(V, p, q, n_theta=64, n_k=64):
    """Band edges from dense diagonalization over a (theta, Bloch phase) grid."""
    eigs = []
    for th in np.arange(n_theta) / (n_theta * q):
        x = (th + np.arange(q) * p / q) % 1.0
        v = np.real(V.evaluate(x))
        for k in np.linspace(0, np.pi, n_k):
            H = np.diag(v).astype(complex)
            for j in range(q - 1):
                H[j, j + 1] += 1
                H[j + 1, j] += 1
            H[0, q - 1] += np.exp(-1j * k)
            H[q - 1, 0] += np.exp(1j * k)
            eigs.append(np.linalg.eigvalsh(H))
    eigs = np.array(eigs)
    return np.stack([eigs.min(axis=0), eigs.max(axis=0)], axis=1)


def test_free_laplacian_is_one_band():
    for pq in [(1, 2), (2, 5), (3, 7)]:
        b = approximant_bands(TrigPolynomial.constant(0.0), pq)
        assert len(b) == 1
        assert b.intervals[0] == pytest.approx([-2, 2], abs=1e-12)


def test_half_period_bands_match_dense_oracle():
    V = amo_potential(0.5)
    raw = approximant_bands(V, (1, 2)).raw
    assert raw.shape == (2, 2)
    assert np.allclose(raw, -raw[::-1, ::-1], atol=1e-12)
    oracle = bloch_oracle(V, 1, 2)
    assert np.allclose(raw, oracle, atol=1e-3)


def test_critical_half_period_bands_touch():
    b = approximant_bands(amo_potential(1.0), (1, 2))
    raw = b.raw
    assert raw[0, 1] == pytest.approx(0.0, abs=1e-12)
    assert raw[1, 0] == pytest.approx(0.0, abs=1e-12)


def test_general_potential_matches_oracle():
    V = TrigPolynomial.from_coeffs({-2: 0.2, -1: 0.3, 1: 0.3, 2: 0.2})
    b = approximant_bands(V, (2, 5), theta_grid=64)
    oracle = bloch_oracle(V, 2, 5, n_theta=64)
    assert np.allclose(np.sort(b.raw, axis=0), np.sort(oracle, axis=0), atol=1e-6)


def test_detect_gaps_examples():
    assert detect_gaps(BandSet(np.array([[-2.0, 2.0]]))) == []
    assert detect_gaps(BandSet(np.array([[-2.0, -1.0], [1.0, 2.0]]))) == [(-1.0, 1.0)]
    gaps = detect_gaps(amo_bands(0.5, 89), 1e-9)
    assert len(gaps) <= 88


def test_widest_gap_label(gold):
    b = amo_bands(0.5, 233)
    gaps = detect_gaps(b, 1e-9)
    recs = label_gaps(gaps, approximant_ids(b), gold)
    widest = max(recs, key=lambda r: r.size)
    assert abs(widest.k) == 1
    target = gold.value if widest.k == 1 else 1 - gold.value
    assert widest.ids_value == pytest.approx(target, abs=1e-3)


def test_synthetic_label_two(gold):
    frac2 = (2 * gold.value) % 1.0
    rec = label_gaps([(0.0, 0.1)], lambda E: frac2, gold)[0]
    assert rec.k == 2 and rec.label_residual < 1e-15


def test_unbounded_components_have_label_zero(gold):
    b = amo_bands(0.5, 89)
    recs = label_gaps(detect_gaps(b), approximant_ids(b), gold, include_unbounded=True, bands=b)
    assert recs[0].k == 0 and recs[-1].k == 0
    assert recs[0].E_plus == b.lo and recs[-1].E_minus == b.hi


def test_ambiguous_and_unlabeled(gold):
    rec = label_gaps([(0.0, 0.1)], lambda E: 0.5, gold, K=3)[0]
    assert rec.status == "unlabeled" and rec.k is None
    f1, f2 = gold.frac_multiples([1, 2])
    amb = label_gaps([(0.0, 0.1)], lambda E: 0.5 * (f1 + f2), gold, K=3, tol=1.0)[0]
    assert amb.status == "ambiguous"
    with pytest.raises(AmbiguousLabel):
        label_gaps([(0.0, 0.1)], lambda E: 0.5 * (f1 + f2), gold, K=3, tol=1.0, strict=True)


def test_band_measure_examples():
    assert band_measure(BandSet(np.array([[-2.0, 2.0]]))) == 4
    assert band_measure(BandSet(np.array([[0.0, 1.0], [2.0, 3.0]]))) == 2
    assert band_measure(amo_bands(1.0, 233)) < band_measure(amo_bands(1.0, 89))


def test_butterfly_rows():
    rows = butterfly_sweep(0.0, 3)
    assert len(rows) == 3
    for _, _, iv in rows:
        assert iv.min() == pytest.approx(-2) and iv.max() == pytest.approx(2)
    assert len(butterfly_sweep(1.0, 5)) == 1 + 2 + 2 + 4
    buf = io.StringIO()
    rows = butterfly_sweep(1.0, 50, out=buf)
    for _, _, iv in rows:
        assert np.allclose(iv, -iv[::-1, ::-1], atol=1e-10)
    assert buf.getvalue().count("\n") == len(rows)


def test_hausdorff_decreases_along_convergents(gold):
    V = amo_potential(0.5)
    sets = [approximant_bands(V, (gold.p[n], gold.q[n])) for n in range(8, 12)]
    d = [hausdorff_distance(a, b) for a, b in zip(sets, sets[1:])]
    assert d[0] > d[1] > d[2]


def test_ids_values_inside_unit_interval(gold):
    b = amo_bands(0.5, 233)
    for r in label_gaps(detect_gaps(b), approximant_ids(b), gold):
        assert 0 < r.ids_value < 1


def test_merge_idempotent():
    b = amo_bands(0.5, 89)
    iv, _ = merge_intervals(b.intervals)
    assert np.array_equal(iv, b.intervals)
    assert detect_gaps(BandSet(iv)) == detect_gaps(b)


@pytest.mark.parametrize("lam", [0.5, 1.0, 2.0])
def test_energy_reflection_symmetry(lam):
    iv = amo_bands(lam, 89).intervals
    assert np.allclose(iv, -iv[::-1, ::-1], atol=1e-10)


def test_duality_scaling():
    small = np.sort(amo_bands(0.5, 89).raw, axis=0)
    big = np.sort(amo_bands(2.0, 89).raw * 0.5, axis=0)
    assert np.allclose(small, big, atol=1e-10)


@given(st.lists(st.tuples(st.floats(-5, 5), st.floats(0, 1)), min_size=1, max_size=12))
def test_merge_produces_disjoint_cover(pieces):
    raw = np.array([[a, a + w] for a, w in pieces])
    iv, counts = merge_intervals(raw)
    assert counts.sum() == len(raw)
    assert np.all(iv[1:, 0] > iv[:-1, 1])
    for l, r in raw:
        assert np.any((iv[:, 0] <= l) & (iv[:, 1] >= r))

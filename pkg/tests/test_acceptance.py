"""Acceptance criteria C1..C14, each at its stated tolerance and time budget.

Every test records a one-line verdict in ``conftest.ACCEPTANCE`` before it
asserts, so the terminal summary lists all fourteen regardless of outcome.
"""

import math
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE, amo_bands, band_midpoints
from qpspec.cocycle import classify_energy, lyapunov, schrodinger_cocycle
from qpspec.duality import dual_matrix, eigenvector_decay, nonresonant_phase
from qpspec.homogeneity import homogeneity_scan
from qpspec.ids import count_below, holder_exponent, ids_count, ids_rotation, locate_band_edge
from qpspec.kam import (ParabolicData, averaging_step, gap_bound_criterion, lemma_checks,
                        locate_gap_edge, reduce_to_constant, reduce_to_parabolic)
from qpspec.potential import TrigMatrix, amo_potential
from qpspec.spectrum import approximant_ids, band_measure, detect_gaps, label_gaps
from qpspec.toda import drift_report

pytestmark = pytest.mark.acceptance


def record(cid, ok, detail, elapsed, budget):
    ok = bool(ok) and elapsed <= budget
    ACCEPTANCE[cid] = f"{cid} {'PASS' if ok else 'FAIL'}  {detail}  [{elapsed:.1f}s / {budget}s]"
    assert ok, ACCEPTANCE[cid]


def labeled(lam, q, freq, floor=1e-10):
    b = amo_bands(lam, q)
    return label_gaps(detect_gaps(b, floor), approximant_ids(b), freq)


def test_c1_gap_asymptotics(gold):
    t = time.perf_counter()
    recs = [r for r in labeled(0.5, 233, gold, 1e-9) if r.k is not None and 1 <= abs(r.k) <= 12]
    x = np.array([abs(r.k) for r in recs], float)
    y = np.log([r.size for r in recs])
    slope, icpt = np.polyfit(x, y, 1)
    r2 = 1 - np.sum((y - (slope * x + icpt)) ** 2) / np.sum((y - y.mean()) ** 2)
    lo, hi = 3 * math.log(0.5), 0.5 * math.log(0.5)
    record("C1", lo <= slope <= hi and r2 >= 0.9,
           f"slope={slope:.3f} in [{lo:.2f}, {hi:.2f}], R2={r2:.3f}, {len(recs)} gaps",
           time.perf_counter() - t, 60)


def test_c2_duality_scaling(gold):
    t = time.perf_counter()
    a = {r.k: r.size for r in labeled(0.5, 233, gold) if r.k is not None and 1 <= abs(r.k) <= 6}
    b = {r.k: r.size for r in labeled(2.0, 233, gold) if r.k is not None and 1 <= abs(r.k) <= 6}
    common = sorted(set(a) & set(b), key=lambda k: (abs(k), k))
    rel = max(abs(a[k] - 0.5 * b[k]) / (0.5 * b[k]) for k in common)
    record("C2", len(common) == 12 and rel <= 0.02,
           f"max rel dev {rel:.2e} over {len(common)} labels", time.perf_counter() - t, 60)


def test_c3_lyapunov(gold):
    t = time.perf_counter()
    Es = band_midpoints(2.0, 20)
    L2 = [lyapunov(schrodinger_cocycle(amo_potential(2.0), E, gold)).value for E in Es]
    # Sigma_2 = 2 Sigma_{1/2}, so the dual energies E/2 lie in the lambda = 1/2 spectrum.
    Lh = [lyapunov(schrodinger_cocycle(amo_potential(0.5), E / 2, gold)).value for E in Es]
    dev = max(abs(v - math.log(2)) for v in L2)
    record("C3", dev <= 0.02 and max(Lh) <= 0.02,
           f"max |L-ln2|={dev:.2e} (lambda=2), max L={max(Lh):.2e} (lambda=0.5)",
           time.perf_counter() - t, 120)


def test_c4_ids_consistency(gold):
    t = time.perf_counter()
    V = amo_potential(0.5)
    Es = np.linspace(-2.9, 2.9, 50)
    c = ids_count(V, gold, Es, n=4000)
    r = ids_rotation(V, gold, Es)
    dev = max(abs(a.N - b.N) for a, b in zip(c, r))
    record("C4", dev <= 5e-3, f"max |N_count - N_rot|={dev:.2e} at 50 energies",
           time.perf_counter() - t, 120)


def test_c5_gap_labelling(gold):
    t = time.perf_counter()
    recs = labeled(0.5, 89, gold, 1e-9)
    ks = [r.k for r in recs]
    good = [r for r in recs if r.k is not None and abs(r.k) <= 50 and r.label_residual <= 1e-3]
    unique = len(set(k for k in ks if k is not None)) == len([k for k in ks if k is not None])
    widest = max(recs, key=lambda r: r.size)
    bad = len(recs) - len(good)
    record("C5", bad == 0 and unique and widest.k is not None and abs(widest.k) == 1,
           f"{len(good)}/{len(recs)} gaps labeled within 1e-3, unique={unique}, "
           f"widest k={widest.k}", time.perf_counter() - t, 60)


def test_c6_holder(gold):
    t = time.perf_counter()
    V = amo_potential(0.5)
    n = 1_000_000
    offs = np.logspace(-7, -3, 12)
    gaps = sorted(detect_gaps(amo_bands(0.5, 233), 1e-9), key=lambda g: g[0] - g[1])[:10]
    hs = []
    for g in gaps:
        for side in ("minus", "plus"):
            E0, _ = locate_band_edge(V, gold, g, side, n=n)
            Es = np.concatenate([E0 - offs, E0 + offs, [E0]])
            cnt = count_below(V, gold, Es, n) / n
            hs.append(holder_exponent(Es[:-1], cnt[:-1], E0, (offs[0], offs[-1]), N0=cnt[-1],
                                      resolution=4 / n))
    record("C6", len(hs) == 20 and all(0.4 <= h <= 0.6 for h in hs),
           f"exponents in [{min(hs):.3f}, {max(hs):.3f}] at {len(hs)} edges",
           time.perf_counter() - t, 120)


def test_c7_homogeneity():
    t = time.perf_counter()
    rep = homogeneity_scan(amo_bands(0.5, 233), n_E=200, n_eps=40)
    record("C7", rep.mu_hat >= 0.4,
           f"mu_hat={rep.mu_hat:.4f} at E={rep.worst_E:.4f}, eps={rep.worst_eps:.3e}",
           time.perf_counter() - t, 60)


def test_c8_critical_measure():
    t = time.perf_counter()
    m = [band_measure(amo_bands(1.0, q)) for q in (34, 89, 233)]
    record("C8", m[0] > m[1] > m[2] and m[2] <= 0.6,
           "measures " + ", ".join(f"{v:.4f}" for v in m), time.perf_counter() - t, 30)


def test_c9_kam_contraction(gold):
    t = time.perf_counter()
    st = reduce_to_constant(amo_potential(0.01), 1.9, gold)
    h = st.history
    run = best = 0
    for rec in h:
        ok = rec["branch"] == "nonres" and rec["eps_after"] <= rec["eps_before"] ** 1.5
        run = run + 1 if ok else 0
        best = max(best, run)
    res = st.cocycle_residual()
    eps = " -> ".join(f"{r['eps_before']:.1e}" for r in h) + f" -> {h[-1]['eps_after']:.1e}"
    record("C9", best >= 3 and res <= 1e-9,
           f"{best} consecutive contracting steps ({eps}), residual={res:.1e}",
           time.perf_counter() - t, 30)


@pytest.fixture(scope="module")
def criterion_runs(gold):
    t = time.perf_counter()
    V = amo_potential(0.01)
    sizes = {r.k: r.size for r in labeled(0.01, 233, gold) if r.k is not None}
    out = []
    for k in (1, -1, 2, -2):
        E = locate_gap_edge(V, gold, k, "minus", bracket=(-2.1, 2.1))
        pd = reduce_to_parabolic(V, E, gold)
        out.append((k, pd, sizes.get(k)))
    return out, time.perf_counter() - t


def test_c11_gap_bound(gold, criterion_runs):
    runs, setup = criterion_runs
    t = time.perf_counter()
    met = contained = 0
    ok = True
    parts = []
    for k, pd, size in runs:
        gb = gap_bound_criterion(pd, 0.2, gold)
        inside = size is not None and gb.contains(size)
        met += gb.condition_met
        contained += inside
        ok &= pd.k == k and (inside or not gb.condition_met)
        parts.append(f"k={k}: zeta={pd.zeta:.2e} gap={size:.2e} margin={gb.log_margin:.1f}")
    note = "vacuous, " if met == 0 else ""
    record("C11", ok, f"{note}condition met {met}/4, gap inside [zeta^1.2, zeta^0.8] {contained}/4; "
           + "; ".join(parts), setup + time.perf_counter() - t, 120)


def test_c10_moser_poschel_identity(gold, criterion_runs):
    t = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(100):
        N = 3
        c = np.zeros((2 * N + 1, 2, 2), complex)
        c[N] = np.eye(2) + 0.3 * rng.normal(size=(2, 2))
        for n in range(1, N + 1):
            v = 0.3 * (rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))) / (n + 1)
            c[N + n], c[N - n] = v, v.conj()
        X = TrigMatrix(c, 1)
        zeta, delta = rng.uniform(1e-4, 0.4), rng.uniform(1e-4, 0.1)
        res = averaging_step(ParabolicData(X, zeta, 0.5, X.analytic_norm(0.5), 1), delta, gold,
                             enforce_smallness=False)
        worst = max(worst, abs(res.d_of_delta - np.linalg.det(res.b0 - delta * res.b1)))
    checks = [lemma_checks(pd) for _, pd, _ in criterion_runs[0]]
    lemmas = all(c["lower_ok"] and c["det_ok"] for c in checks)
    hyp = sum(c["hypothesis"] for c in checks)
    record("C10", worst <= 1e-12 and lemmas,
           f"max |d - det|={worst:.1e} over 100 inputs; lemma inequalities hold on "
           f"{len(checks)} normal forms (det hypothesis active on {hyp})",
           time.perf_counter() - t, 10)


def test_c12_toda(gold):
    t = time.perf_counter()
    rep = drift_report(amo_potential(0.5), gold, 0.0, 64, 1.0, 1e-3)
    record("C12", rep["middle_third_drift"] <= 1e-5 and rep["trace_drift"] <= 1e-13,
           f"eigenvalue drift={rep['middle_third_drift']:.1e}, sum b drift={rep['trace_drift']:.1e}",
           time.perf_counter() - t, 60)


def test_c13_dual_localization(gold):
    t = time.perf_counter()
    # The dual of coupling 1/4 is a quarter of the operator at coupling 4.
    theta = nonresonant_phase(gold)
    fit = eigenvector_decay(dual_matrix(amo_potential(0.25), gold, theta, 401))
    rel = abs(fit.rate - math.log(4)) / math.log(4)
    record("C13", rel <= 0.15, f"rate={fit.rate:.4f} vs ln4={math.log(4):.4f} (rel {rel:.1%})",
           time.perf_counter() - t, 30)


def test_c14_classifier(gold):
    t = time.perf_counter()
    grid = [0.01, 0.02, 0.05]
    sub = [classify_energy(amo_potential(0.5), E, gold, grid) for E in band_midpoints(0.5, 10)]
    sup = [classify_energy(amo_potential(2.0), E, gold, grid) for E in band_midpoints(2.0, 10)]
    ok = all(c == "subcritical" for c in sub) and all(c == "supercritical" for c in sup)
    record("C14", ok, f"subcritical {sub.count('subcritical')}/10 at 0.5, "
           f"supercritical {sup.count('supercritical')}/10 at 2", time.perf_counter() - t, 120)

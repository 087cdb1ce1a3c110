"""Dual long-range operators, phase resonances and eigenvector decay."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import eig_banded

from .arithmetic import Frequency, torus_norm
from .cocycle import lyapunov, schrodinger_cocycle
from .errors import Delocalized
from .potential import TrigPolynomial
from .spectrum import BandSet


@dataclass(frozen=True, eq=False)
class DualOperator:
    """Hopping v_l at offset l plus diagonal 2 cos 2 pi (theta + j alpha) on sites -m..m."""

    V: TrigPolynomial
    freq: Frequency
    theta: float
    n: int
    matrix: np.ndarray

    @property
    def sites(self) -> np.ndarray:
        m = (self.n - 1) // 2
        return np.arange(-m, m + 1)

    @property
    def bandwidth(self) -> int:
        nz = [n for n in self.V.coeffs if n != 0]
        return max((abs(n) for n in nz), default=0)

    @property
    def diagonal(self) -> np.ndarray:
        return np.real(np.diag(self.matrix))

    def banded(self) -> np.ndarray:
        """Lower banded storage for LAPACK."""
        w = self.bandwidth
        ab = np.zeros((w + 1, self.n), dtype=self.matrix.dtype)
        for l in range(w + 1):
            ab[l, : self.n - l] = np.diagonal(self.matrix, -l)
        return ab


def dual_matrix(V: TrigPolynomial, freq: Frequency, theta: float, n: int) -> DualOperator:
    if n < 21 or n % 2 == 0:
        raise ValueError("n must be odd and >= 21")
    m = (n - 1) // 2
    j = np.arange(-m, m + 1)
    x = (float(theta) + freq.frac_multiples(j)) % 1.0
    diag = 2.0 * np.cos(2.0 * np.pi * x)
    co = {l: v for l, v in V.coeffs.items() if l != 0}
    real = all(abs(v.imag) == 0 for v in co.values())
    H = np.diag(diag).astype(float if real else complex)
    for l, v in co.items():
        if abs(l) >= n:
            continue
        # (H u)_j gets v_l u_{j-l}
        idx = np.arange(max(0, l), min(n, n + l))
        H[idx, idx - l] += v.real if real else v
    return DualOperator(V, freq, float(theta), n, H)


@dataclass(frozen=True)
class ResonanceList:
    eps0: float
    entries: tuple
    theta: float = 0.0

    def check(self, freq: Frequency) -> bool:
        """Recheck both defining inequalities for every entry."""
        for k in self.entries:
            if _res_dist(self.theta, freq, k) > math.exp(-self.eps0 * abs(k)):
                return False
            ls = np.arange(-abs(k), abs(k) + 1)
            if np.any(_res_dist(self.theta, freq, ls) < _res_dist(self.theta, freq, k)):
                return False
        return True


def _res_dist(theta: float, freq: Frequency, ks):
    return torus_norm(2.0 * float(theta) - freq.frac_multiples(ks))


def resonances(theta: float, freq: Frequency, eps0: float, K: int) -> ResonanceList:
    """Nonzero n, |n| <= K, with ||2 theta - n alpha|| <= e^{-eps0 |n|} that also
    minimize ||2 theta - l alpha|| over |l| <= |n|.  Sorted by |n|, then n."""
    if K < 1 or eps0 <= 0:
        raise ValueError("need K >= 1 and eps0 > 0")
    ks = np.arange(-K, K + 1)
    d = _res_dist(theta, freq, ks)
    out = []
    for m in range(1, K + 1):
        window = d[K - m: K + m + 1]
        best = window.min()
        for k in (-m, m):
            v = d[K + k]
            if v <= math.exp(-eps0 * m) and v <= best:
                out.append(k)
    return ResonanceList(eps0, tuple(out), float(theta))


def nonresonant_phase(freq: Frequency, eps0: float = 0.05, K: int = 200,
                      rng: np.random.Generator | None = None, max_draws: int = 1000) -> float:
    """Draw theta uniformly until it has no resonance with |n| <= K."""
    rng = rng or np.random.default_rng(0)
    for _ in range(max_draws):
        theta = float(rng.random())
        if not resonances(theta, freq, eps0, K).entries:
            return theta
    raise RuntimeError("no non-resonant phase found")


def eigenpairs(op: DualOperator):
    """All eigenvalues and eigenvectors (columns) via the banded solver."""
    return eig_banded(op.banded(), lower=True)


def _tridiagonal_hopping(op: DualOperator) -> float | None:
    if op.bandwidth != 1 or np.iscomplexobj(op.matrix):
        return None
    return float(op.matrix[1, 0])


def accurate_eigenvector(op: DualOperator, E: float, center: int) -> np.ndarray:
    """Eigenvector for eigenvalue E rebuilt outward from ``center`` by ratios.

    For nearest-neighbour real hopping h the ratios u_{j+1}/u_j to the right
    of the center follow from the right boundary inward by
    s_{j-1} = h / (E - d_j - h s_j), and symmetrically on the left.  This is
    the stable direction for decaying tails, so entries far below machine
    epsilon relative to the peak keep full relative accuracy.  Normalized to
    u[center] = 1.
    """
    h = _tridiagonal_hopping(op)
    if h is None:
        raise ValueError("ratio reconstruction needs a real tridiagonal operator")
    d = op.diagonal
    n = op.n
    tiny = 1e-300
    s = np.zeros(n)  # s[j] = u_{j+1}/u_j
    for j in range(n - 1, center, -1):
        den = E - d[j] - (h * s[j] if j < n - 1 else 0.0)
        s[j - 1] = h / (den if den != 0 else tiny)
    t = np.zeros(n)  # t[j] = u_{j-1}/u_j
    for j in range(0, center):
        den = E - d[j] - (h * t[j] if j > 0 else 0.0)
        t[j + 1] = h / (den if den != 0 else tiny)
    u = np.zeros(n)
    u[center] = 1.0
    for j in range(center, n - 1):
        u[j + 1] = u[j] * s[j]
    for j in range(center, 0, -1):
        u[j - 1] = u[j] * t[j]
    return u


def log_profile(op: DualOperator, E: float, center: int) -> np.ndarray:
    """ln|u_j| with ln|u_center| = 0, accumulated in logs (no underflow)."""
    h = _tridiagonal_hopping(op)
    if h is None:
        raise ValueError("log profile needs a real tridiagonal operator")
    d = op.diagonal
    n = op.n
    tiny = 1e-300
    out = np.zeros(n)
    s = 0.0
    ratios = np.zeros(n)
    for j in range(n - 1, center, -1):
        den = E - d[j] - h * s
        s = h / (den if den != 0 else tiny)
        ratios[j - 1] = s
    for j in range(center, n - 1):
        out[j + 1] = out[j] + math.log(max(abs(ratios[j]), tiny))
    t = 0.0
    for j in range(0, center):
        den = E - d[j] - h * t
        t = h / (den if den != 0 else tiny)
        ratios[j + 1] = t
    for j in range(center, 0, -1):
        out[j - 1] = out[j] + math.log(max(abs(ratios[j]), tiny))
    return out


@dataclass(frozen=True)
class DecayFit:
    rate: float
    energy: float
    center: int
    profile: np.ndarray
    index: int


def _select(op: DualOperator, w, U, which):
    mid = op.n // 2
    if which == "center":
        peaks = np.argmax(np.abs(U), axis=0)
        return int(np.argmin(np.abs(peaks - mid)))
    if isinstance(which, tuple) and which[0] == "energy":
        return int(np.argmin(np.abs(w - which[1])))
    return int(which)


def _envelope_slope(dist, prof, sel, block: int) -> float:
    """Slope of the block-maximum envelope of a log profile.

    Taking block maxima on each side removes the dips at sign changes, which
    otherwise tilt the fit for extended states.
    """
    xs, ys = [], []
    c = int(np.argmin(dist))
    for side in (np.arange(c, -1, -1), np.arange(c, dist.size)):
        idx = side[sel[side]]
        for k in range(0, idx.size - block + 1, block):
            chunk = idx[k:k + block]
            j = chunk[np.argmax(prof[chunk])]
            xs.append(dist[j])
            ys.append(prof[j])
    if len(xs) < 4:
        raise Delocalized("too few usable samples in the decay window")
    return float(np.polyfit(xs, ys, 1)[0])


def eigenvector_decay(op: DualOperator, which="center") -> DecayFit:
    """Decay rate of a dual eigenvector: minus the slope of ln|u_j| against |j - c|.

    ``which`` is 'center' (the eigenvector peaked closest to site 0), an index
    into the sorted eigenvalues, or ('energy', E).  The fit uses distances in
    [0.1 n, 0.4 n] from the center c = argmax |u|.  Raises Delocalized when
    the fitted slope is >= -1e-3; returns rate = inf for a diagonal operator.
    """
    w, U = eigenpairs(op)
    i = _select(op, w, U, which)
    E = float(w[i])
    u = U[:, i]
    c = int(np.argmax(np.abs(u)))
    resid = np.linalg.norm(op.matrix @ u - E * u)
    if resid > 1e-10 * max(1.0, np.abs(w).max()):
        raise RuntimeError(f"eigenpair residual {resid:.1e} too large")
    if op.bandwidth == 0:
        return DecayFit(math.inf, E, c, np.where(np.arange(op.n) == c, 0.0, -np.inf), i)
    if _tridiagonal_hopping(op) is not None:
        prof = log_profile(op, E, c)
    else:
        with np.errstate(divide="ignore"):
            prof = np.log(np.abs(u) / np.abs(u[c]))
    dist = np.abs(np.arange(op.n) - c)
    sel = (dist >= 0.1 * op.n) & (dist <= 0.4 * op.n) & np.isfinite(prof)
    if _tridiagonal_hopping(op) is None:
        sel &= prof > math.log(1e-13)
    if sel.sum() < 4:
        raise Delocalized("too few usable samples in the decay window")
    slope = _envelope_slope(dist, prof, sel, max(5, op.n // 80))
    if slope >= -1e-3:
        raise Delocalized(f"no decay detected (slope {slope:.2e})")
    return DecayFit(-slope, E, c, prof, i)


def write_decay_profile(fit: DecayFit, op: DualOperator, out):
    """CSV rows j,log_abs_u."""
    if isinstance(out, (str, bytes)) or hasattr(out, "__fspath__"):
        with open(out, "w", newline="") as fh:
            return write_decay_profile(fit, op, fh)
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["j", "log_abs_u"])
    for j, v in zip(op.sites, fit.profile):
        w.writerow([int(j), repr(float(v))])


def bloch_residual(uhat, theta: float, V: TrigPolynomial, E: float, freq: Frequency,
                   strip_y: float, grid: int = 64, sites=None) -> tuple[float, float]:
    """Residual of S_E(z) U(z) = e^{2 pi i theta} U(z + alpha), U(z) = (e^{2 pi i theta} u(z), u(z - alpha)).

    u(z) = sum_j uhat_j e^{2 pi i j z}; ``sites`` gives the j of each entry and
    defaults to a centred range.  The maximum relative residual over x on a
    grid and Im z in {-strip_y, 0, strip_y} is returned together with the
    boundary mass sum |uhat_j| e^{2 pi |j| strip_y} over the two outermost
    sites on each side, which bounds the truncation error.
    """
    uhat = np.asarray(uhat, dtype=complex)
    if sites is None:
        m = (uhat.size - 1) // 2
        sites = np.arange(-m, uhat.size - m)
    sites = np.asarray(sites)
    alpha = freq.value
    e = np.exp(2j * np.pi * float(theta))
    worst = 0.0
    for y in sorted({-float(strip_y), 0.0, float(strip_y)}):
        z = np.arange(grid) / grid + 1j * y

        def u(zz):
            return np.exp(2j * np.pi * np.multiply.outer(zz, sites)) @ uhat

        u0, um, up = u(z), u(z - alpha), u(z + alpha)
        Vz = V.evaluate(z)
        r1 = (E - Vz) * e * u0 - um - e * e * up
        r2 = e * u0 - e * u0
        norm = np.sqrt(np.abs(e * u0) ** 2 + np.abs(um) ** 2)
        rel = np.sqrt(np.abs(r1) ** 2 + np.abs(r2) ** 2) / np.maximum(norm, 1e-300)
        worst = max(worst, float(rel.max()))
    order = np.argsort(sites)
    edge = np.concatenate([order[:2], order[-2:]])
    tail = float(np.sum(np.abs(uhat[edge]) * np.exp(2 * np.pi * np.abs(sites[edge]) * abs(strip_y))))
    return worst, tail


def dual_spectrum(op: DualOperator, drop_edge_states: bool = True) -> np.ndarray:
    """Eigenvalues, without states carrying over half their mass in the outer 10%."""
    w, U = eigenpairs(op)
    if not drop_edge_states:
        return w
    outer = max(1, op.n // 10)
    mass = np.sum(np.abs(U[:outer]) ** 2, axis=0) + np.sum(np.abs(U[-outer:]) ** 2, axis=0)
    return w[mass <= 0.5]


def points_as_bands(points) -> BandSet:
    pts = np.unique(np.asarray(points, dtype=float))
    return BandSet(np.stack([pts, pts], axis=1), {"kind": "points"})


def strip_growth(V: TrigPolynomial, E: float, freq: Frequency, y: float,
                 m: int = 100_000, x_samples: int = 4) -> float:
    """(1/m) ln ||A_m(x + i y)|| averaged over phases."""
    return lyapunov(schrodinger_cocycle(V, E, freq), y, m, x_samples).value

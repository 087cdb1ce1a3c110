"""Integrated density of states: Sturm counting, rotation numbers, Thouless, Holder fits."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .arithmetic import Frequency
from .cocycle import _potential_arrays, rotation_number, schrodinger_cocycle
from .errors import DegenerateWindow, InsufficientSamples
from .potential import TrigPolynomial


@dataclass(frozen=True)
class IdsSample:
    E: float
    N: float
    method: str
    n_size: int


def potential_diagonal(V: TrigPolynomial, freq: Frequency, theta: float, n: int) -> np.ndarray:
    """V(theta + j alpha) for j = 1..n."""
    vm, vc = _potential_arrays(V)
    return K.sample_potential(vm, vc, freq.value, float(theta), n)


def count_below(V: TrigPolynomial, freq: Frequency, energies, n: int, theta: float = 0.0) -> np.ndarray:
    """Eigenvalue counts below each energy for one n x n Dirichlet truncation."""
    diag = potential_diagonal(V, freq, theta, n)
    return K.sturm_counts(diag, np.atleast_1d(np.asarray(energies, dtype=float)))


def ids_count(V: TrigPolynomial, freq: Frequency, E, n: int = 4000, theta_samples: int = 4):
    """Phase-averaged fraction of eigenvalues below E of the n-site truncation.

    Returns one IdsSample for scalar E, a list for an array of energies.
    """
    if n < 10:
        raise ValueError("n must be >= 10")
    Es = np.atleast_1d(np.asarray(E, dtype=float))
    total = np.zeros(Es.shape, dtype=float)
    for t in range(theta_samples):
        total += count_below(V, freq, Es, n, (t + 0.5) / theta_samples)
    Ns = total / (theta_samples * n)
    out = [IdsSample(float(e), float(v), "count", n) for e, v in zip(Es, Ns)]
    return out[0] if np.ndim(E) == 0 else out


def ids_rotation(V: TrigPolynomial, freq: Frequency, E, n: int = 1_000_000, phases: int = 8):
    """N = 1 - 2 rho; NonConvergence from the rotation number propagates."""
    Es = np.atleast_1d(np.asarray(E, dtype=float))
    out = []
    for e in Es:
        r = rotation_number(schrodinger_cocycle(V, float(e), freq), n=n, phases=phases)
        out.append(IdsSample(float(e), 1.0 - 2.0 * r.rho, "rotation", n))
    return out[0] if np.ndim(E) == 0 else out


def _xlogx(u: np.ndarray) -> np.ndarray:
    au = np.abs(u)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(au > 0, u * np.log(np.where(au > 0, au, 1.0)), 0.0)


def thouless_lyapunov(V, freq, E: float, ids_samples) -> float:
    """Integral of ln|E - E'| dN(E') for the piecewise-linear interpolant of N.

    Each cell contributes its constant density times the exact integral
    u ln|u| - u over u = E' - E, which also covers the cell holding E.
    """
    if ids_samples and isinstance(ids_samples[0], IdsSample):
        Es = np.array([s.E for s in ids_samples])
        Ns = np.array([s.N for s in ids_samples])
    else:
        Es, Ns = (np.asarray(a, dtype=float) for a in ids_samples)
    order = np.argsort(Es, kind="stable")
    Es, Ns = Es[order], Ns[order]
    if len(Es) < 10 or Ns[0] > 1e-3 or Ns[-1] < 1 - 1e-3:
        raise InsufficientSamples("samples must span N from 0 to 1 with at least 10 points")
    dE = np.diff(Es)
    dN = np.diff(Ns)
    ok = dE > 0
    dens = np.where(ok, dN / np.where(ok, dE, 1.0), 0.0)
    a = Es[:-1] - E
    b = Es[1:] - E
    cell = (_xlogx(b) - b) - (_xlogx(a) - a)
    return float(np.sum(dens * cell))


def holder_exponent(E, N, E0: float, window: tuple[float, float], N0: float | None = None,
                    resolution: float = 0.0, min_samples: int = 8) -> float:
    """Local Holder exponent of N at E0 from a log-log least-squares fit.

    Each side of E0 is fitted separately over offsets inside ``window``;
    increments at or below ``resolution`` are treated as zero.  A side on which
    N is flat (a gap) is dropped; the smaller exponent of the remaining sides is
    returned.
    """
    E = np.asarray(E, dtype=float)
    N = np.asarray(N, dtype=float)
    lo, hi = window
    if N0 is None:
        order = np.argsort(E)
        N0 = float(np.interp(E0, E[order], N[order]))
    d = np.abs(E - E0)
    inside = (d >= lo) & (d <= hi)
    slopes = []
    for side in (E < E0, E > E0):
        sel = inside & side
        if sel.sum() < min_samples:
            raise ValueError(f"need at least {min_samples} samples on each side in the window")
        dN = np.abs(N[sel] - N0)
        good = dN > resolution
        if good.sum() < min_samples:
            continue
        x = np.log(d[sel][good])
        y = np.log(dN[good])
        slopes.append(float(np.polyfit(x, y, 1)[0]))
    if not slopes:
        raise DegenerateWindow(f"N is constant around E0={E0} on the window")
    return min(slopes)


def locate_band_edge(V: TrigPolynomial, freq: Frequency, gap: tuple[float, float], side: str,
                     n: int = 1_000_000, theta: float = 0.0, extra: int = 3,
                     tol: float = 1e-13) -> tuple[float, int]:
    """Edge of the band bordering ``gap`` on ``side`` ('minus' or 'plus').

    Works on one n-site truncation: starting from the count at the gap midpoint
    it bisects for the energy where ``extra`` more eigenvalues have appeared
    (this skips up to extra - 1 boundary states sitting inside the gap).
    Returns the edge and the plateau count.
    """
    diag = potential_diagonal(V, freq, theta, n)
    lo_g, hi_g = gap
    mid = 0.5 * (lo_g + hi_g)
    width = hi_g - lo_g
    c_mid = int(K.sturm_counts(diag, np.array([mid]))[0])
    if side == "plus":
        target = c_mid + extra
        a, b = mid, hi_g + max(width, 1e-6)
        while K.sturm_counts(diag, np.array([b]))[0] < target:
            b += 2 * (b - mid)
        while b - a > tol * max(1.0, abs(b)):
            m = 0.5 * (a + b)
            if K.sturm_counts(diag, np.array([m]))[0] >= target:
                b = m
            else:
                a = m
        return b, c_mid
    if side == "minus":
        target = c_mid - extra
        a, b = lo_g - max(width, 1e-6), mid
        while K.sturm_counts(diag, np.array([a]))[0] > target:
            a -= 2 * (mid - a)
        while b - a > tol * max(1.0, abs(a)):
            m = 0.5 * (a + b)
            if K.sturm_counts(diag, np.array([m]))[0] > target:
                b = m
            else:
                a = m
        return a, c_mid
    raise ValueError("side must be 'minus' or 'plus'")

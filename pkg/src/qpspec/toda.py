"""Toda lattice flow started from quasi-periodic Jacobi data.

Flaschka variables: a_j couples sites j and j+1, b_j is the diagonal.  With a
free boundary the last a is carried along but decoupled (treated as 0).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .arithmetic import Frequency
from .potential import TrigPolynomial


@dataclass(frozen=True, eq=False)
class TodaState:
    a: np.ndarray
    b: np.ndarray
    t: float = 0.0
    boundary: str = "free"

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float)
        b = np.asarray(self.b, dtype=float)
        if a.shape != b.shape or a.ndim != 1:
            raise ValueError("a and b must be 1-d sequences of equal length")
        if self.boundary not in ("free", "periodic"):
            raise ValueError("boundary must be 'free' or 'periodic'")
        if np.any(self._links(a) <= 0):
            raise ValueError("off-diagonal entries must stay positive")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    def _links(self, a):
        return a if self.boundary == "periodic" else a[:-1]

    @property
    def n(self) -> int:
        return self.a.size

    def trace(self) -> float:
        return float(np.sum(self.b))

    def trace_square(self) -> float:
        """tr J^2 = sum b_j^2 + 2 sum a_j^2 over the active links."""
        return float(np.sum(self.b ** 2) + 2 * np.sum(self._links(self.a) ** 2))


def toda_init(V: TrigPolynomial, freq: Frequency, theta: float, n: int,
              boundary: str = "free") -> TodaState:
    """a = 1, b_j = V(theta + j alpha) for j = 0..n-1."""
    if n < 8:
        raise ValueError("n must be >= 8")
    j = np.arange(n)
    x = (float(theta) + j * freq.value) % 1.0
    b = np.real(V.evaluate(x)).astype(float)
    return TodaState(np.ones(n), b, 0.0, boundary)


def _rhs(a, b, periodic: bool):
    if periodic:
        b_next = np.roll(b, -1)
        a_prev = np.roll(a, 1)
        da = a * (b_next - b)
    else:
        a = a.copy()
        a[-1] = 0.0
        b_next = np.append(b[1:], 0.0)
        a_prev = np.concatenate([[0.0], a[:-1]])
        da = a * (b_next - b)
    db = 2.0 * (a * a - a_prev * a_prev)
    return da, db


def toda_step(s: TodaState, dt: float) -> TodaState:
    """One classical RK4 step of a' = a (b_next - b), b' = 2 (a^2 - a_prev^2)."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    per = s.boundary == "periodic"
    a, b = s.a, s.b
    k1a, k1b = _rhs(a, b, per)
    k2a, k2b = _rhs(a + 0.5 * dt * k1a, b + 0.5 * dt * k1b, per)
    k3a, k3b = _rhs(a + 0.5 * dt * k2a, b + 0.5 * dt * k2b, per)
    k4a, k4b = _rhs(a + dt * k3a, b + dt * k3b, per)
    na = a + dt / 6.0 * (k1a + 2 * k2a + 2 * k3a + k4a)
    nb = b + dt / 6.0 * (k1b + 2 * k2b + 2 * k3b + k4b)
    if not per:
        na[-1] = a[-1]
    return TodaState(na, nb, s.t + dt, s.boundary)


def toda_evolve(s: TodaState, T: float, dt: float, snapshot_every: int = 0):
    """Integrate to time s.t + T with fixed dt (the last step is shortened).

    Returns the final state and, if ``snapshot_every`` > 0, the list of states
    taken every that many steps (including the start and the end).
    """
    if T <= 0:
        raise ValueError("T must be positive")
    steps = int(math.ceil(T / dt - 1e-9))
    snaps = [s] if snapshot_every else []
    t_end = s.t + T
    for i in range(steps):
        h = min(dt, t_end - s.t)
        if h <= 0:
            break
        s = toda_step(s, h)
        if snapshot_every and ((i + 1) % snapshot_every == 0 or i == steps - 1):
            snaps.append(s)
    return s, snaps


def jacobi_matrix(s: TodaState) -> np.ndarray:
    J = np.diag(s.b)
    idx = np.arange(s.n - 1)
    J[idx, idx + 1] = s.a[:-1]
    J[idx + 1, idx] = s.a[:-1]
    if s.boundary == "periodic":
        J[0, -1] += s.a[-1]
        J[-1, 0] += s.a[-1]
    return J


def jacobi_spectrum(s: TodaState) -> np.ndarray:
    """Sorted eigenvalues of the Jacobi matrix of the state."""
    if s.boundary == "free":
        return eigh_tridiagonal(s.b, s.a[:-1], eigvals_only=True)
    return np.linalg.eigvalsh(jacobi_matrix(s))


def _middle_third(ev: np.ndarray) -> np.ndarray:
    n = ev.size
    return ev[n // 3: n - n // 3]


def isospectral_drift(V: TrigPolynomial, freq: Frequency, theta: float, n: int,
                      T: float, dt: float, boundary: str = "free") -> float:
    """Max change of the middle third of the sorted spectrum between 0 and T."""
    s0 = toda_init(V, freq, theta, n, boundary)
    s1, _ = toda_evolve(s0, T, dt)
    return float(np.max(np.abs(_middle_third(jacobi_spectrum(s1))
                               - _middle_third(jacobi_spectrum(s0)))))


def drift_report(V, freq, theta, n, T, dt, boundary: str = "free") -> dict:
    s0 = toda_init(V, freq, theta, n, boundary)
    s1, _ = toda_evolve(s0, T, dt)
    e0, e1 = jacobi_spectrum(s0), jacobi_spectrum(s1)
    return {"n": n, "T": T, "dt": dt, "boundary": boundary,
            "middle_third_drift": float(np.max(np.abs(_middle_third(e1) - _middle_third(e0)))),
            "full_drift": float(np.max(np.abs(e1 - e0))),
            "trace_drift": abs(s1.trace() - s0.trace()),
            "trace_square_drift": abs(s1.trace_square() - s0.trace_square())}


def write_snapshots(snaps, out):
    """CSV rows t,j,a_j,b_j."""
    if isinstance(out, (str, bytes)) or hasattr(out, "__fspath__"):
        with open(out, "w", newline="") as fh:
            return write_snapshots(snaps, fh)
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["t", "j", "a_j", "b_j"])
    for s in snaps:
        for j in range(s.n):
            w.writerow([repr(float(s.t)), j, repr(float(s.a[j])), repr(float(s.b[j]))])

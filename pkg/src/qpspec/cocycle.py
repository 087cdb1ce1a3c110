"""Quasi-periodic SL(2) cocycles over x -> x + alpha.

Transfer products, Lyapunov exponents (also on complex phases x + iy),
fibered rotation numbers and the uniform hyperbolicity / subcriticality tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .arithmetic import Frequency
from .errors import NonConvergence
from .potential import TrigMatrix, TrigPolynomial


@dataclass(frozen=True, eq=False)
class Cocycle:
    freq: Frequency
    entries: TrigMatrix
    det_tolerance: float = 1e-10
    potential: TrigPolynomial | None = None
    energy: float | None = None

    def entry(self, i: int, j: int) -> TrigPolynomial:
        return self.entries.entry(i, j)

    def __call__(self, z):
        return self.entries.evaluate(z)

    @property
    def is_real(self) -> bool:
        c = self.entries.c
        return bool(np.allclose(c, np.conj(c[::-1]), atol=1e-13))

    def det_defect(self, grid: int = 64) -> float:
        x = np.arange(grid) / grid
        A = self.entries.evaluate(x)
        return float(np.max(np.abs(np.linalg.det(A) - 1.0)))


@dataclass(frozen=True)
class LyapunovResult:
    value: float
    y_offset: float
    n_iter: int
    std_err: float


@dataclass(frozen=True)
class RotationResult:
    rho: float
    n_iter: int
    winding_residual: float


def schrodinger_cocycle(V: TrigPolynomial, E: float, freq: Frequency) -> Cocycle:
    """The cocycle (E - V, -1; 1, 0)."""
    if not V.reality:
        raise ValueError("Schrodinger cocycles need a real potential")
    top = TrigPolynomial.constant(E) - V
    ent = TrigMatrix.from_entries([[top, -1.0], [1.0, 0.0]])
    return Cocycle(freq, ent, potential=V, energy=float(E))


def constant_cocycle(A, freq: Frequency) -> Cocycle:
    return Cocycle(freq, TrigMatrix.constant(np.asarray(A, dtype=float)))


def rotation_matrix(theta: float) -> np.ndarray:
    """R_theta, rotation by the angle 2 pi theta."""
    c, s = math.cos(2 * math.pi * theta), math.sin(2 * math.pi * theta)
    return np.array([[c, -s], [s, c]])


def _modes_coefs(c: Cocycle):
    ent = c.entries
    keep = np.any(ent.c != 0, axis=(1, 2))
    keep[ent.N] = True
    return (ent.modes[keep].astype(np.float64), np.ascontiguousarray(ent.c[keep]),
            float(ent.period))


def _potential_arrays(V: TrigPolynomial):
    keep = V.c != 0
    if not keep.any():
        return np.zeros(1), np.zeros(1, dtype=complex)
    return V.modes[keep].astype(np.float64), np.ascontiguousarray(V.c[keep])


def iterate(c: Cocycle, n: int, x: float, renormalize: bool = True):
    """The n-step transfer matrix A_n(x) as (M, log_scale), A_n = e^{log_scale} M.

    For n < 0 this is the inverse product A(x + n alpha)^{-1} ... A(x - alpha)^{-1}.
    With ``renormalize=False`` the raw product is returned with log_scale 0 and
    an OverflowError is raised if it leaves the float range.
    """
    alpha = c.freq.value
    modes, coefs, period = _modes_coefs(c)
    if n == 0:
        M, ls = np.eye(2, dtype=complex), 0.0
    elif n > 0:
        M, ls = K.transfer_product(modes, coefs, period, alpha, float(x), 0.0, n)
    else:
        m = -n
        P, ls = K.transfer_product(modes, coefs, period, alpha, float(x) - m * alpha, 0.0, m)
        det = P[0, 0] * P[1, 1] - P[0, 1] * P[1, 0]
        M = np.array([[P[1, 1], -P[0, 1]], [-P[1, 0], P[0, 0]]]) / det
        ls = -ls
        s = np.abs(M).max()
        M, ls = M / s, ls + math.log(s)
    if not renormalize:
        with np.errstate(over="raise"):
            try:
                factor = math.exp(ls)
            except OverflowError:
                raise OverflowError("transfer product exceeds float range; enable renormalization")
        M, ls = M * factor, 0.0
    if c.is_real and np.isrealobj(x):
        M = M.real
    return M, ls


def _phases(x_samples: int, shift: float = 0.0) -> np.ndarray:
    return (np.arange(x_samples) + 0.5) / x_samples + shift


def lyapunov(c: Cocycle, y: float = 0.0, n: int = 10_000, x_samples: int = 8) -> LyapunovResult:
    """Mean over start phases of (1/n) ln ||A_n(x + iy)||."""
    if n < 1:
        raise ValueError("n must be >= 1")
    xs = _phases(x_samples)
    alpha = c.freq.value
    if c.potential is not None:
        vm, vc = _potential_arrays(c.potential)
        logs = K.schrodinger_lognorms(vm, vc, alpha, float(c.energy), xs, float(y), n)
    else:
        modes, coefs, period = _modes_coefs(c)
        logs = np.empty(x_samples)
        for i, x in enumerate(xs):
            M, ls = K.transfer_product(modes, coefs, period, alpha, float(x), float(y), n)
            logs[i] = ls + math.log(np.linalg.norm(M, 2))
    vals = logs / n
    err = float(np.std(vals, ddof=1) / math.sqrt(x_samples)) if x_samples > 1 else 0.0
    return LyapunovResult(max(float(np.mean(vals)), 0.0), float(y), n, err)


def rotation_number(c: Cocycle, n: int = 1_000_000, x0: float = 0.0, phases: int = 8,
                    tol: float = 1e-3) -> RotationResult:
    """Fibered rotation number by continuous lifting of the projective angle.

    The average is folded into [0, 1/2] with rho -> 1 - rho.  The residual is
    the spread of the per-phase averages plus the 1/(2n) lifting slack.
    """
    alpha = c.freq.value
    starts = x0 + np.arange(phases) / phases
    rhos = np.empty(phases)
    if c.potential is not None:
        vm, vc = _potential_arrays(c.potential)
        for i, x in enumerate(starts):
            rhos[i] = K.schrodinger_winding(vm, vc, alpha, float(c.energy), float(x), n)
    else:
        modes, coefs, period = _modes_coefs(c)
        for i, x in enumerate(starts):
            rhos[i] = K.winding(modes, coefs, period, alpha, float(x), n, 0.0)
    rhos /= 2 * math.pi * n
    rho = float(np.mean(rhos)) % 1.0
    if rho > 0.5:
        rho = 1.0 - rho
    residual = float(np.max(np.abs(rhos - rhos.mean()))) + 0.5 / n
    if residual > tol:
        raise NonConvergence(f"winding residual {residual:.2e} exceeds {tol:.1e}")
    return RotationResult(rho, n, residual)


def is_uniformly_hyperbolic(c: Cocycle, n: int = 10_000, margin: float = 1e-3,
                            phases: int = 16) -> bool:
    """Heuristic uniform hyperbolicity test.

    Requires ln||A_n(x)||/n > margin at every grid phase and the most
    contracted direction of A_n(x) to agree with that of A_{n/2}(x) (an
    invariant stable cone field shows up as fast convergence of these).
    """
    alpha = c.freq.value
    modes, coefs, period = _modes_coefs(c)
    for x in _phases(phases):
        M, ls = K.transfer_product(modes, coefs, period, alpha, float(x), 0.0, n)
        if (ls + math.log(np.linalg.norm(M, 2))) / n <= margin:
            return False
        M2, _ = K.transfer_product(modes, coefs, period, alpha, float(x), 0.0, n // 2)
        s_full = np.linalg.svd(M)[2][-1]
        s_half = np.linalg.svd(M2)[2][-1]
        if 1.0 - abs(np.vdot(s_full, s_half)) > 1e-8:
            return False
    return True


def classify_energy(V: TrigPolynomial, E: float, freq: Frequency, eps_grid,
                    n: int = 20_000, x_samples: int = 8) -> str:
    """'supercritical', 'subcritical' or 'undetermined'.

    Supercritical when L(0) is clearly positive.  Subcritical when L vanishes
    on a run of grid offsets starting at 0 that contains a positive offset,
    i.e. on a strip of positive width; offsets beyond the first positive L are
    irrelevant.
    """
    c = schrodinger_cocycle(V, E, freq)

    def vanishes(res: LyapunovResult) -> bool:
        return res.value <= 3 * res.std_err + 1e-3

    L0 = lyapunov(c, 0.0, n, x_samples)
    if not vanishes(L0):
        return "supercritical"
    ys = sorted({abs(float(y)) for y in eps_grid if y != 0})
    strip = 0.0
    for y in ys:
        if not vanishes(lyapunov(c, y, n, x_samples)):
            break
        strip = y
    return "subcritical" if strip > 0 else "undetermined"


def lyapunov_profile(V: TrigPolynomial, E: float, freq: Frequency, ys,
                     n: int = 20_000, x_samples: int = 8) -> list[LyapunovResult]:
    c = schrodinger_cocycle(V, E, freq)
    return [lyapunov(c, float(y), n, x_samples) for y in ys]


def winding_degree(values: np.ndarray) -> int:
    """Degree of a loop of SL(2,R)/PSL(2,R) matrices sampled on [0, 1).

    Counts half-turns of the orthogonal polar factor, so a loop homotopic to
    theta -> R_{n theta / 2} has degree n.  Unreliable if samples are too
    sparse to resolve the rotation between neighbours.
    """
    ang = np.arctan2(values[:, 1, 0] - values[:, 0, 1], values[:, 0, 0] + values[:, 1, 1])
    ang = np.concatenate([ang, ang[:1]])
    # polar angles of M and -M differ by pi, so unwrap modulo pi
    steps = np.diff(ang)
    steps = (steps + np.pi / 2) % np.pi - np.pi / 2
    return int(round(steps.sum() / np.pi))

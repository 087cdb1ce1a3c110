"""Quantitative reducibility of SL(2, R) cocycles close to constants.

The KAM step conjugates (alpha, A + F) by e^Y, solving the linearized
cohomological equation mode by mode on an sl(2) basis and keeping the
resonant components.  In the resonant case a rotation R_{n theta / 2} moves
the resonant mode to the mean.  Around a gap edge the driver ends at a
parabolic constant (1 zeta; 0 1); the Moser-Poschel averaging step and the
two-sided gap criterion work from that normal form.

Strip norms are sum |c_n| e^{2 pi h |n| / period}, as in ``potential``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .arithmetic import DioEstimate, Frequency, beta_estimate, dio_estimate, torus_norm
from .cocycle import rotation_number, schrodinger_cocycle
from .errors import (DivergenceRisk, InvalidKappa, InvalidPotential, InvalidZeta,
                     MaxInnerIterations, MaxSteps, NotAGapEdge, SmallDivisor,
                     SmallnessViolated)
from .potential import TrigMatrix, TrigPolynomial

_SQRT2 = math.sqrt(2.0)


# ---------------------------------------------------------------- 2x2 algebra

def _inv2(M: np.ndarray) -> np.ndarray:
    """Inverse of a stack of 2x2 matrices by the adjugate."""
    det = M[..., 0, 0] * M[..., 1, 1] - M[..., 0, 1] * M[..., 1, 0]
    out = np.empty_like(M)
    out[..., 0, 0] = M[..., 1, 1]
    out[..., 1, 1] = M[..., 0, 0]
    out[..., 0, 1] = -M[..., 0, 1]
    out[..., 1, 0] = -M[..., 1, 0]
    return out / det[..., None, None]


def expm2(Y: np.ndarray) -> np.ndarray:
    """exp of a stack of 2x2 matrices in closed form.

    With Y = (tr/2) I + Y0, e^Y = e^{tr/2} (cosh s I + sinh(s)/s Y0) where
    s^2 = -det Y0.
    """
    Y = np.asarray(Y)
    half = 0.5 * (Y[..., 0, 0] + Y[..., 1, 1])
    Y0 = Y.copy()
    Y0[..., 0, 0] -= half
    Y0[..., 1, 1] -= half
    q = -(Y0[..., 0, 0] * Y0[..., 1, 1] - Y0[..., 0, 1] * Y0[..., 1, 0])
    s = np.sqrt(q.astype(complex))
    small = np.abs(q) < 1e-8
    ss = np.where(small, 1.0, s)
    c = np.where(small, 1 + q / 2 + q * q / 24, np.cosh(ss))
    f = np.where(small, 1 + q / 6 + q * q / 120, np.sinh(ss) / ss)
    if np.isrealobj(Y):
        c, f = c.real, f.real
    out = f[..., None, None] * Y0
    out[..., 0, 0] += c
    out[..., 1, 1] += c
    return out * np.exp(half)[..., None, None]


def rotation(theta) -> np.ndarray:
    """R_theta (rotation by 2 pi theta), vectorized over theta."""
    t = 2 * np.pi * np.asarray(theta, dtype=float)
    c, s = np.cos(t), np.sin(t)
    return np.stack([np.stack([c, -s], -1), np.stack([s, c], -1)], -2)


def _coords(M: np.ndarray) -> np.ndarray:
    """Coordinates of traceless matrices in the orthonormal basis
    diag(1, -1)/sqrt2, E12, E21."""
    return np.stack([(M[..., 0, 0] - M[..., 1, 1]) / _SQRT2, M[..., 0, 1], M[..., 1, 0]], -1)


def _from_coords(v: np.ndarray) -> np.ndarray:
    M = np.zeros(v.shape[:-1] + (2, 2), dtype=v.dtype)
    M[..., 0, 0] = v[..., 0] / _SQRT2
    M[..., 1, 1] = -v[..., 0] / _SQRT2
    M[..., 0, 1] = v[..., 1]
    M[..., 1, 0] = v[..., 2]
    return M


_BASIS = _from_coords(np.eye(3))


def adjoint(A: np.ndarray) -> np.ndarray:
    """3x3 matrix of Y -> A Y A^{-1} on sl(2)."""
    Ai = _inv2(A)
    return _coords(A @ _BASIS @ Ai).T


def to_sl2(M: np.ndarray) -> np.ndarray:
    """Scale a matrix with positive determinant to determinant one."""
    d = float(np.linalg.det(M))
    if d <= 0:
        raise SmallnessViolated(f"mean matrix has determinant {d:.3e}", which="mean")
    return M / math.sqrt(d)


def rotation_form(A: np.ndarray) -> tuple[np.ndarray, float] | None:
    """For elliptic A return (C, xi) with C in SL(2, R) and C^{-1} A C = R_xi."""
    tr = float(np.trace(A))
    if abs(tr) >= 2.0:
        return None
    w, v = np.linalg.eig(A)
    for i in range(2):
        a, b = v[:, i].real, v[:, i].imag
        C = np.stack([a, -b], axis=1)
        d = float(np.linalg.det(C))
        if d > 0:
            C = C / math.sqrt(d)
            xi = math.atan2(w[i].imag, w[i].real) / (2 * math.pi)
            return C, xi
    return None


# ------------------------------------------------------------------- constants

def d_alpha_R(freq: Frequency, R: float, cutoff: int | None = None,
              tail_tol: float = 1e-10, tau: float = 1.0) -> tuple[float, float]:
    """2 + 40 sum_{n != 0} e^{-(R + 3 beta)|n|/2} / |e^{2 pi i n alpha} - 1|^3.

    Returns (partial sum up to |n| <= cutoff, bound on the neglected tail).
    The tail bound uses |e^{2 pi i n alpha} - 1| >= 4 ||n alpha|| >= 4 gamma / n^tau
    with gamma fitted by ``dio_estimate`` up to the cutoff.  Without an
    explicit cutoff it is doubled until the tail bound drops below tail_tol.
    """
    beta = beta_estimate(freq)
    if R <= 3 * beta:
        raise DivergenceRisk(f"R={R} is not above 3*beta={3 * beta:.3e}")
    a = (R + 3 * beta) / 2

    def partial(c):
        n = np.arange(1, c + 1)
        div = 2 * np.abs(np.sin(np.pi * freq.frac_multiples(n)))
        if np.any(div == 0):
            raise SmallDivisor(int(n[np.argmin(div)]), 0.0)
        return 2.0 + 40.0 * 2.0 * float(np.sum(np.exp(-a * n) / div ** 3))

    def tail(c):
        gamma = dio_estimate(freq, tau, c).gamma
        k = 3 * tau
        n0 = max(c + 1, int(math.ceil(k / a)) + 1)
        head = 0.0
        if n0 > c + 1:
            m = np.arange(c + 1, n0)
            head = float(np.sum(m ** k * np.exp(-a * m)))
        ratio = math.exp(-a) * ((n0 + 1) / n0) ** k
        geo = n0 ** k * math.exp(-a * n0) / (1 - ratio) if ratio < 1 else math.inf
        return 80.0 * (head + geo) / (4 * gamma) ** 3

    if cutoff is not None:
        return partial(cutoff), tail(cutoff)
    c = 64
    while tail(c) > tail_tol:
        c *= 2
        if c > 1 << 20:
            break
    return partial(c), tail(c)


def d_tau(tau: float) -> float:
    """2^{4 tau + 9} Gamma(4 tau + 2); OverflowError past the float range."""
    if tau <= 0:
        raise ValueError("tau must be positive")
    return 2.0 ** (4 * tau + 9) * math.gamma(4 * tau + 2)


# ----------------------------------------------------------- KAM state & step

@dataclass(frozen=True)
class KamConfig:
    grid: int = 256
    max_inner: int = 50
    eta_coef: float = 2.0
    eta_exp: float = 0.25
    nonres_exp: float = 1.0 / 15.0
    hou_you_exp: float = 0.5
    target_exp: float = 2.0
    smallness_exp: float = 800.0
    noise: float = 64 * np.finfo(float).eps
    tau: float = 1.0

    def eta(self, eps: float) -> float:
        return self.eta_coef * eps ** self.eta_exp


@dataclass(frozen=True, eq=False)
class KamState:
    A: np.ndarray
    F: TrigMatrix
    r: float
    eps: float
    conj: TrigMatrix
    degree: int
    history: tuple
    base: TrigMatrix
    alpha: float

    def history_json(self) -> str:
        return json.dumps(list(self.history), indent=1)

    def cocycle_residual(self, grid: int = 128) -> float:
        """max |conj(x+alpha)^{-1} (A0+F0)(x) conj(x) - (A+F)(x)| on an offset grid."""
        x = (np.arange(grid) + 0.5) / grid
        lhs = _conjugated(self.base, self.conj, self.alpha, x)
        rhs = self.A[None] + self.F.evaluate(x)
        return float(np.max(np.abs(lhs - rhs)))

    def det_defect(self, grid: int = 128) -> float:
        x = np.arange(grid) / grid * self.conj.period
        return float(np.max(np.abs(np.linalg.det(self.conj.evaluate(x)) - 1)))


def _conjugated(base: TrigMatrix, conj: TrigMatrix, alpha: float, x) -> np.ndarray:
    W0 = conj.evaluate(x)
    W1 = conj.evaluate(np.asarray(x) + alpha)
    M = _inv2(W1) @ base.evaluate(x) @ W0
    return M.real


def _clean(coefs: np.ndarray, noise: float) -> np.ndarray:
    scale = np.abs(coefs).max(initial=0.0)
    out = coefs.copy()
    out[np.abs(out) < noise * max(scale, 1.0)] = 0
    return out


def _split(base, conj, alpha, grid, noise):
    """Conjugated cocycle as (A, F) with A its mean scaled into SL(2, R)."""
    x = np.arange(grid) / grid
    C = _conjugated(base, conj, alpha, x)
    T = TrigMatrix.from_grid(C, 1)
    c = _clean(T.c, noise)
    A = to_sl2(c[T.N].real)
    c[T.N] -= A
    return A, TrigMatrix(c, 1)


def _compose(W: TrigMatrix, U_grid_fn, period: int, grid: int) -> TrigMatrix:
    """Coefficients of W(x) U(x) sampled on a grid of one common period."""
    period = max(W.period, period)
    M = grid * period
    x = np.arange(M) / M * period
    prod = W.evaluate(x) @ U_grid_fn(x)
    return TrigMatrix.from_grid(prod, period, N=(M - 1) // 2)


def _res_distance(xi: float | None, n: np.ndarray, alpha_fracs: np.ndarray) -> np.ndarray:
    """min over signs of ||2 xi -+ n alpha||, infinite when A is not elliptic."""
    if xi is None:
        return np.full(n.shape, np.inf)
    return np.minimum(torus_norm(2 * xi - alpha_fracs), torus_norm(2 * xi + alpha_fracs))


@dataclass
class _Solve:
    Y: TrigMatrix
    nonres_norm: float
    res_weight: np.ndarray
    modes: np.ndarray


def _solve_linear(A: np.ndarray, F: TrigMatrix, alpha: float, fracs: np.ndarray,
                  xi: float | None, eta: float, r_plus: float) -> _Solve:
    """Solve Ad_{A^{-1}} Y(x+alpha) - Y(x) = G_nonres(x) mode by mode, G = A^{-1} F.

    Components whose singular value is below eta at a mode that is resonant
    with the rotation of A are kept (not solved).
    """
    G = TrigMatrix(np.einsum("ij,njk->nik", _inv2(A), F.c), 1)
    g = _coords(G.c)
    n = G.modes
    w = np.exp(2j * np.pi * n * alpha)
    L = w[:, None, None] * adjoint(_inv2(A))[None] - np.eye(3)[None]
    U, S, Vh = np.linalg.svd(L)
    res_mode = 2 * np.sin(np.pi * np.minimum(_res_distance(xi, n, fracs), 0.5)) < eta
    keep = (S < eta) & res_mode[:, None]
    keep[n == 0] = True
    proj = np.einsum("nji,nj->ni", U.conj(), g)  # u_i^H g
    solved = np.where(keep, 0, proj)
    y = np.einsum("nij,ni->nj", Vh.conj(), solved / np.where(keep, 1, S))
    resid = np.einsum("nij,nj->ni", U, np.where(keep, proj, 0))
    weights = np.exp(2 * np.pi * r_plus * np.abs(n))
    nonres_vec = np.einsum("nij,nj->ni", U, solved)
    nonres = np.linalg.norm(nonres_vec, axis=1)
    res = np.linalg.norm(resid, axis=1)
    res[n == 0] = 0
    nonres[n == 0] = 0
    Y = TrigMatrix(_from_coords(y), 1)
    return _Solve(Y, float(np.sum(nonres * weights)), res * weights, n)


def _smallness_margin(state: "KamState", r_plus: float, cfg: KamConfig) -> float:
    """ln of (r r+ - r+^2)^{800(tau+1)} (1+|A|^...) over eps, with D0 = 1.

    Purely informational: the constant D0 is not explicit.
    """
    base = state.r * r_plus - r_plus ** 2
    if base <= 0 or state.eps <= 0:
        return math.inf
    normA = float(np.abs(state.A).sum(axis=1).max())
    e = 120 * (1 + 1 / cfg.tau)
    return (math.log1p(normA ** e) if normA ** e < 1e300 else e * math.log(normA)) \
        + cfg.smallness_exp * (cfg.tau + 1) * math.log(base) - math.log(state.eps)


def initial_state(base: TrigMatrix, alpha: float, r: float, cfg: KamConfig = KamConfig()) -> KamState:
    conj = TrigMatrix.constant(np.eye(2))
    A, F = _split(base, conj, alpha, cfg.grid, cfg.noise)
    return KamState(A, F, r, F.analytic_norm(r), conj, 0, (), base, alpha)


def kam_state_from_cocycle(c, r: float, cfg: KamConfig = KamConfig()) -> KamState:
    return initial_state(c.entries, c.freq.value, r, cfg)


def kam_step(state: KamState, r_plus: float, freq: Frequency,
             cfg: KamConfig = KamConfig()) -> KamState:
    """One KAM step from radius state.r down to r_plus.

    Non-resonant branch: Newton iteration on the linearized equation until
    the solvable part of the perturbation is below eps^2.  Resonant branch
    (a mode 0 < |n| <= N with ||2 xi - n alpha|| small carries resonant weight
    above eps^2): the same elimination, then C_A brings A to a rotation and
    R_{s n theta / 2} moves the resonance to the mean; degree += s n.
    """
    if not 0 < r_plus < state.r:
        raise ValueError("need 0 < r_plus < r")
    eps = state.eps
    alpha = freq.value
    if eps == 0:
        rec = {"branch": "nonres", "n_star": 0, "eps_before": 0.0, "eps_after": 0.0,
               "r": state.r, "r_plus": r_plus, "inner": 0}
        return replace(state, r=r_plus, history=state.history + (rec,))
    eta = cfg.eta(eps)
    N = int(min(2 * abs(math.log(eps)) / (state.r - r_plus), cfg.grid // 2 - 1))
    margin = _smallness_margin(state, r_plus, cfg)
    target = eps ** cfg.target_exp
    conj = state.conj
    A, F = state.A, state.F
    branch, n_star, sign = "nonres", 0, 0
    y_first = 0.0
    it = 0
    for it in range(cfg.max_inner):
        rf = _rotation_parameter(A)
        fr = freq.frac_multiples(F.modes)
        sol = _solve_linear(A, F, alpha, fr, rf, eta, r_plus)
        if it == 0:
            y_first = sol.Y.analytic_norm(r_plus)
            if y_first > eps ** cfg.hou_you_exp:
                raise SmallnessViolated(
                    f"|Y| = {y_first:.3e} exceeds eps^{cfg.hou_you_exp} = {eps ** cfg.hou_you_exp:.3e}",
                    which="hou_you", state=state)
            mask = (np.abs(sol.modes) > 0) & (np.abs(sol.modes) <= N) & (sol.res_weight > target)
            if np.any(mask):
                branch = "res"
                j = int(np.argmax(np.where(mask, sol.res_weight, -1.0)))
                n_star = abs(int(sol.modes[j]))
        if sol.nonres_norm < target or sol.nonres_norm < 1e-15:
            break
        Yc = sol.Y
        conj = _compose(conj, lambda x, Yc=Yc: expm2(Yc.evaluate(x).real), 1, cfg.grid)
        conj = TrigMatrix(_clean(conj.c, cfg.noise), conj.period)
        A, F = _split(state.base, conj, alpha, cfg.grid, cfg.noise)
    else:
        raise MaxInnerIterations(f"no contraction after {cfg.max_inner} inner iterations")
    degree = state.degree
    if branch == "res":
        rf = rotation_form(A)
        if rf is None:
            branch, n_star = "nonres", 0
        else:
            CA, xi = rf
            sign = 1 if torus_norm(2 * xi - n_star * alpha) <= torus_norm(2 * xi + n_star * alpha) else -1
            m = sign * n_star
            conj = TrigMatrix(np.einsum("nij,jk->nik", conj.c, CA), conj.period)
            period = 2 if m % 2 else 1
            conj = _compose(conj, lambda x, m=m: rotation(m * x / 2), period, cfg.grid)
            conj = TrigMatrix(_clean(conj.c, cfg.noise), conj.period)
            degree += m
            A, F = _split(state.base, conj, alpha, cfg.grid, cfg.noise)
    eps_after = F.analytic_norm(r_plus)
    rec = {"branch": branch, "n_star": int(sign * n_star),
           "eps_before": float(eps), "eps_after": float(eps_after),
           "r": float(state.r), "r_plus": float(r_plus), "inner": it + 1,
           "eta": float(eta), "N": N, "y_norm": float(y_first),
           "nonres_margin": _nonres_margin(A, state.A, eps, N, freq, cfg),
           "smallness_log_margin": float(margin)}
    return KamState(A, F, r_plus, eps_after, conj, degree, state.history + (rec,),
                    state.base, alpha)


def _rotation_parameter(A: np.ndarray) -> float | None:
    rf = rotation_form(A)
    return None if rf is None else rf[1]


def _nonres_margin(A_new, A_old, eps, N, freq, cfg) -> float:
    """min over 0 < n <= N of ||2 xi -+ n alpha|| minus eps^{1/15} for the incoming A."""
    xi = _rotation_parameter(A_old)
    if xi is None or N < 1:
        return math.inf
    n = np.arange(1, N + 1)
    d = _res_distance(xi, n, freq.frac_multiples(n))
    return float(d.min() - eps ** cfg.nonres_exp)


# ------------------------------------------------------------- reduction driver

@dataclass(frozen=True, eq=False)
class ParabolicData:
    """X(x+alpha)^{-1} S_E(x) X(x) = sign * (1 zeta; 0 1) up to ``residual``.

    ``orientation`` is -1 when X was composed with diag(1, -1) to make zeta
    nonnegative (then det X = -1).  In both cases sign * X(x+alpha)^{-1}
    S_{E'}(x) X(x) = B - delta P(x) with E' = ``shifted_energy(delta)``.
    """

    X: TrigMatrix
    zeta: float
    R: float
    norm_X: float
    k: int
    sign: int = 1
    orientation: int = 1
    residual: float = 0.0
    energy: float | None = None
    alpha: float | None = None
    potential: TrigPolynomial | None = None
    state: KamState | None = None
    k_rotation: int | None = None

    def averages(self) -> tuple[float, float, float]:
        """([X11^2], [X12^2], [X11 X12]) from the Fourier coefficients."""
        x11 = self.X.c[:, 0, 0]
        x12 = self.X.c[:, 0, 1]
        return _mean_product(x11, x11), _mean_product(x12, x12), _mean_product(x11, x12)

    def shifted_energy(self, delta: float) -> float:
        return self.energy - self.orientation * delta

    def norm_on_torus(self) -> float:
        return self.X.analytic_norm(0.0)

    def to_jsonable(self) -> dict:
        return {"X": self.X.to_jsonable(), "zeta": self.zeta, "R": self.R, "norm_X": self.norm_X,
                "k": self.k, "k_rotation": self.k_rotation, "sign": self.sign,
                "orientation": self.orientation, "residual": self.residual,
                "energy": self.energy, "alpha": self.alpha}

    @classmethod
    def from_jsonable(cls, d: dict) -> "ParabolicData":
        """Inverse of to_jsonable; norm_X is recomputed unless X is absent."""
        if "X" in d:
            period = int(d["X"].get("period", 1))
            ent = [[TrigPolynomial.from_json(json.dumps(e), period) for e in row]
                   for row in d["X"]["entries"]]
            X = TrigMatrix.from_entries(ent)
        else:
            X = TrigMatrix.constant(np.eye(2))
        R = float(d["R"])
        norm_X = float(d["norm_X"]) if "norm_X" in d and "X" not in d else X.analytic_norm(R)
        return cls(X, float(d["zeta"]), R, norm_X, int(d.get("k", 0)), int(d.get("sign", 1)),
                   int(d.get("orientation", 1)), float(d.get("residual", 0.0)),
                   d.get("energy"), d.get("alpha"), None, None, d.get("k_rotation"))


def _mean_product(f: np.ndarray, g: np.ndarray) -> float:
    """Mean of f g over a period for real functions, sum_n f_n g_{-n}."""
    return float(np.real(np.sum(f * g[::-1])))


def radius_schedule(r0: float, r: float, steps: int) -> list[float]:
    """r_0 > r_1 > ... with r_j - r_{j+1} = (r0 - r)/4^{j+1}."""
    out = [r0]
    for j in range(steps):
        out.append(out[-1] - (r0 - r) / 4 ** (j + 1))
    return out


@dataclass(frozen=True)
class ReduceConfig:
    eps_star: float = 0.1
    terminal_tol: float = 1e-12
    rotation_n: int = 1_000_000
    edge_tol: float = 1e-4
    label_K: int = 50
    residual_tol: float = 1e-8
    kam: KamConfig = field(default_factory=KamConfig)


def _check_potential(V: TrigPolynomial):
    if not V.reality:
        raise InvalidPotential("potential must be real")
    if all(n == 0 for n in V.coeffs):
        raise InvalidPotential("potential must be non-constant")


def reduce_to_constant(V: TrigPolynomial, E: float, freq: Frequency, r0: float = 0.05,
                       r: float = 0.025, max_steps: int = 30,
                       cfg: ReduceConfig = ReduceConfig()) -> KamState:
    """Iterate KAM steps on the Schrodinger cocycle until eps < terminal_tol."""
    _check_potential(V)
    pert = V - V.mean()
    norm = pert.analytic_norm(r0)
    if norm > cfg.eps_star:
        raise SmallnessViolated(f"|V - [V]|_{r0} = {norm:.3e} exceeds eps_* = {cfg.eps_star}",
                                which="eps_star")
    c = schrodinger_cocycle(V, E, freq)
    state = initial_state(c.entries, freq.value, r0, cfg.kam)
    radii = radius_schedule(r0, r, max_steps)
    for j in range(max_steps):
        if state.eps < cfg.terminal_tol:
            return state
        try:
            state = kam_step(state, radii[j + 1], freq, cfg.kam)
        except SmallnessViolated as exc:
            raise SmallnessViolated(f"step {j}: {exc}", which=exc.which, state=state) from exc
    if state.eps < cfg.terminal_tol:
        return state
    raise MaxSteps(f"eps = {state.eps:.3e} after {max_steps} steps", state=state)


def gap_label_of(rho: float, freq: Frequency, K: int = 50) -> tuple[int, float]:
    """k with ||(1 - 2 rho) - k alpha|| minimal over 0 < |k| <= K, and that distance.

    This is the IDS label: N = 1 - 2 rho equals {k alpha} on the gap.
    """
    ks = np.arange(-K, K + 1)
    ks = ks[ks != 0]
    d = torus_norm(1 - 2 * rho - freq.frac_multiples(ks))
    i = int(np.argmin(d))
    return int(ks[i]), float(d[i])


def parabolic_form(state: KamState) -> tuple[np.ndarray, float, int, int]:
    """(R_phi, zeta, sign, orientation) with R_phi^{-1} sign*A R_phi ~ (1 zeta; 0 1)."""
    A = state.A
    sign = 1 if np.trace(A) >= 0 else -1
    Nm = sign * A - np.eye(2)
    v = np.linalg.svd(Nm)[2][-1]
    phi = math.atan2(v[1], v[0]) / (2 * math.pi)
    Rphi = rotation(phi)
    Bp = Rphi.T @ (sign * A) @ Rphi
    zeta = float(Bp[0, 1])
    orientation = 1
    if zeta < 0:
        orientation = -1
        zeta = -zeta
    return Rphi, zeta, sign, orientation


def reduce_to_parabolic(V: TrigPolynomial, E: float, freq: Frequency, r0: float = 0.05,
                        r: float = 0.025, max_steps: int = 30,
                        cfg: ReduceConfig = ReduceConfig(), check_edge: bool = True) -> ParabolicData:
    """Conjugate S_E to (1 zeta; 0 1) at a gap edge E.

    The gap label is k = -degree of the accumulated conjugacy.
    """
    _check_potential(V)
    k_rot = None
    if check_edge:
        rho = rotation_number(schrodinger_cocycle(V, E, freq), n=cfg.rotation_n, phases=2).rho
        k_rot, dist = gap_label_of(rho, freq, cfg.label_K)
        if dist > cfg.edge_tol:
            raise NotAGapEdge(f"||2 rho - k alpha|| >= {dist:.2e} for all |k| <= {cfg.label_K}")
    state = reduce_to_constant(V, E, freq, r0, r, max_steps, cfg)
    Rphi, zeta, sign, orientation = parabolic_form(state)
    D = np.diag([1.0, float(orientation)])
    X = TrigMatrix(np.einsum("nij,jk->nik", state.conj.c, Rphi @ D), state.conj.period)
    B = sign * np.array([[1.0, zeta], [0.0, 1.0]])
    x = (np.arange(128) + 0.5) / 128
    S = schrodinger_cocycle(V, E, freq).entries
    lhs = _conjugated(S, X, freq.value, x)
    resid = float(np.max(np.abs(lhs - B[None])))
    if resid > cfg.residual_tol:
        raise NotAGapEdge(f"parabolic residual {resid:.2e} exceeds {cfg.residual_tol:.1e}")
    return ParabolicData(X, zeta, r, X.analytic_norm(r), -state.degree, sign, orientation,
                         resid, float(E), freq.value, V, state, k_rot)


def edge_function(V, E, freq, r0=0.05, r=0.025, cfg: ReduceConfig = ReduceConfig()):
    """|tr A_T(E)|/2 - 1 for the terminal constant A_T: > 0 in a gap, <= 0 in a band."""
    st = reduce_to_constant(V, E, freq, r0, r, cfg=cfg)
    return abs(float(np.trace(st.A))) / 2 - 1, st


def _rho(V, E, freq, n):
    return rotation_number(schrodinger_cocycle(V, E, freq), n=n, phases=2).rho


def locate_gap_edge(V: TrigPolynomial, freq: Frequency, k: int, side: str,
                    bracket: tuple[float, float] | None = None, r0: float = 0.05,
                    r: float = 0.025, cfg: ReduceConfig = ReduceConfig(),
                    n_rot: int = 1_000_000, xtol: float = 1e-14) -> float:
    """Edge of the gap with IDS value k alpha mod 1 ('minus' = lower edge, 'plus' = upper).

    The fibered rotation number is monotone in E and equals {-k alpha}/2 on
    the gap, so bisection on it lands in (or within its resolution of) the
    gap.  A point where the reduced constant is hyperbolic with degree -k is
    then moved outward until the constant turns elliptic, and the sign change
    of edge_function is refined by Brent's method.
    """
    from scipy.optimize import brentq

    if k == 0:
        raise ValueError("k = 0 labels the unbounded gaps")
    if side not in ("minus", "plus"):
        raise ValueError("side must be 'minus' or 'plus'")
    target = float(freq.frac_multiples([-k])[0]) / 2
    if bracket is None:
        vals = V.evaluate(np.linspace(0, 1, 257))
        bracket = (float(vals.min()) - 2.0, float(vals.max()) + 2.0)
    lo, hi = bracket
    res = 2.0 / n_rot

    def in_gap(E):
        v, st = edge_function(V, E, freq, r0, r, cfg)
        return v > 0 and st.degree == -k

    inside = None
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        d = _rho(V, mid, freq, n_rot) - target
        if abs(d) < res and in_gap(mid):
            inside = mid
            break
        if hi - lo < 1e-14 * max(1.0, abs(mid)):
            break
        if d > 0:
            lo = mid
        else:
            hi = mid
    if inside is None:
        mid = 0.5 * (lo + hi)
        h = 1e-9
        while inside is None and h < 1e-3:
            for cand in (mid - h, mid + h):
                if in_gap(cand):
                    inside = cand
                    break
            h *= 1.5
    if inside is None:
        raise NotAGapEdge(f"no energy with IDS label {k} found in {bracket}")
    s = -1.0 if side == "minus" else 1.0
    h = 1e-10
    out = inside + s * h
    while in_gap(out):
        h *= 2
        out = inside + s * h
        if h > 1.0:
            raise NotAGapEdge("gap does not close")

    def f(E):
        v, st = edge_function(V, E, freq, r0, r, cfg)
        return v if st.degree == -k else -abs(v) - 1e-300

    a, b = sorted((inside, out))
    return brentq(f, a, b, xtol=xtol, rtol=4 * np.finfo(float).eps)


# ------------------------------------------------------------------- averaging

def homological_solve(zeta: float, G: TrigMatrix, freq: Frequency, N: int | None = None,
                      floor: float = 1e-12) -> TrigMatrix:
    """Y with Y(x+alpha) B - B Y(x) = B (G(x) - [G]), B = (1 zeta; 0 1).

    Mode by mode with w = e^{2 pi i n alpha} and H = B G:
      y21 = h21/(w-1), y11 = (h11 + zeta y21)/(w-1),
      y22 = (h22 - w zeta y21)/(w-1), y12 = (h12 - w zeta y11 + zeta y22)/(w-1).
    When tr(B G) = 0 this gives tr Y = -zeta y21.
    """
    if N is None:
        N = G.N
    Gc = G.pad(N)
    n = np.arange(-N, N + 1)
    B = np.array([[1.0, zeta], [0.0, 1.0]])
    H = np.einsum("ij,njk->nik", B, Gc)
    w = np.exp(2j * np.pi * n * freq.value / G.period)
    dv = w - 1
    Y = np.zeros_like(H)
    for i in np.nonzero(n)[0]:
        if abs(dv[i]) < floor:
            raise SmallDivisor(int(n[i]), float(abs(dv[i])))
        h = H[i]
        y21 = h[1, 0] / dv[i]
        y11 = (h[0, 0] + zeta * y21) / dv[i]
        y22 = (h[1, 1] - w[i] * zeta * y21) / dv[i]
        y12 = (h[0, 1] - w[i] * zeta * y11 + zeta * y22) / dv[i]
        Y[i] = [[y11, y12], [y21, y22]]
    return TrigMatrix(Y, G.period)


def averaged_matrices(s: float, t: float, m: float, zeta: float):
    """b0, b1 from s = [X11^2], t = [X12^2], m = [X11 X12]."""
    b0 = np.array([[0.0, zeta], [0.0, 0.0]])
    b1 = np.array([[m - zeta * s / 2, -zeta * m + t],
                   [-s, -m + zeta * s / 2]])
    return b0, b1


def d_two_term(s: float, t: float, m: float, zeta: float, delta: float) -> float:
    """-delta s zeta + delta^2 (s t - m^2)."""
    return -delta * s * zeta + delta ** 2 * (s * t - m * m)


def d_exact(s: float, t: float, m: float, zeta: float, delta: float) -> float:
    """det(b0 - delta b1); differs from the two-term form by -(delta zeta s / 2)^2."""
    return d_two_term(s, t, m, zeta, delta) - (delta * zeta * s / 2) ** 2


@dataclass(frozen=True, eq=False)
class AveragingResult:
    b0: np.ndarray
    b1: np.ndarray
    d_of_delta: float
    d_two_term: float
    P1_bound: float
    Xtilde: TrigMatrix
    Y: TrigMatrix
    averages: tuple


def perturbation_P(X: TrigMatrix, zeta: float, grid: int = 256) -> TrigMatrix:
    """P with X(x+alpha)^{-1} S_{E-delta} X(x) = B - delta P, read off X11 and X12."""
    x = np.arange(grid) / grid
    V = X.evaluate(x).real
    x11, x12 = V[:, 0, 0], V[:, 0, 1]
    P = np.stack([np.stack([x11 * x12 - zeta * x11 ** 2, -zeta * x11 * x12 + x12 ** 2], -1),
                  np.stack([-x11 ** 2, -x11 * x12], -1)], -2)
    T = TrigMatrix.from_grid(P, 1)
    return TrigMatrix(_clean(T.c, 1e-15), 1)


def averaging_step(pd: ParabolicData, delta: float, freq: Frequency,
                   enforce_smallness: bool = True, mode: str = "beta_form",
                   dio: DioEstimate | None = None) -> AveragingResult:
    """One averaging step for B - delta P at the parabolic normal form.

    b0, b1 and d use averages computed exactly from Fourier coefficients;
    d_of_delta is det(b0 - delta b1) and ``d_two_term`` keeps only the first
    two orders.  The smallness bound on delta is checked when requested.
    """
    s, t, m = pd.averages()
    zeta = pd.zeta
    b0, b1 = averaged_matrices(s, t, m, zeta)
    if mode == "beta_form":
        D = d_alpha_R(freq, pd.R)[0]
        limit = 1.0 / (D * pd.norm_X ** 2)
        P1 = 2 * D ** 2 * pd.norm_X ** 4
    else:
        if dio is None:
            raise ValueError("diophantine_form needs a DioEstimate")
        Dt = d_tau(dio.tau)
        limit = dio.gamma ** 3 * pd.R ** (4 * dio.tau + 1) / (Dt * pd.norm_X ** 2)
        P1 = 2 * Dt ** 2 * dio.gamma ** -6 * pd.R ** (-2 * (4 * dio.tau + 1)) * pd.norm_X ** 4
    if enforce_smallness and not 0 < delta < limit:
        raise SmallnessViolated(f"delta={delta:.3e} not in (0, {limit:.3e})", which=mode)
    P = perturbation_P(pd.X, zeta)
    Binv = np.array([[1.0, -zeta], [0.0, 1.0]])
    G = TrigMatrix(-delta * np.einsum("ij,njk->nik", Binv, P.c), 1)
    Y = homological_solve(zeta, G, freq)
    grid = 2 * (2 * Y.N + 1)
    x = np.arange(grid) / grid
    Xt = TrigMatrix.from_grid(expm2(Y.evaluate(x)), 1)
    return AveragingResult(b0, b1, d_exact(s, t, m, zeta, delta), d_two_term(s, t, m, zeta, delta),
                           P1, Xt, Y, (s, t, m))


# -------------------------------------------------------------- gap criterion

@dataclass(frozen=True)
class GapBound:
    lower: float
    upper: float
    kappa: float
    condition_met: bool
    which_condition: str
    log_margin: float
    lhs: float
    rhs: float

    def contains(self, size: float) -> bool:
        return self.lower <= size <= self.upper

    def to_jsonable(self) -> dict:
        return {"lower": self.lower, "upper": self.upper, "kappa": self.kappa,
                "condition_met": self.condition_met, "which_condition": self.which_condition,
                "log_margin": self.log_margin, "lhs": self.lhs, "rhs": self.rhs}


def gap_bound_criterion(pd: ParabolicData, kappa: float, freq: Frequency,
                        mode: str = "beta_form", dio: DioEstimate | None = None) -> GapBound:
    """Evaluate |X|_R^14 zeta^kappa against the explicit constant of ``mode``.

    The log margin is ln(rhs) - ln(lhs); the bounds zeta^{1 +- kappa} are
    returned either way and are only asserted when condition_met holds.
    """
    if not 0 < kappa < 0.25:
        raise InvalidKappa(f"kappa={kappa} outside (0, 1/4)")
    zeta = pd.zeta
    if not 0 < zeta < 0.5:
        raise InvalidZeta(f"zeta={zeta} outside (0, 1/2); zeta = 0 means a collapsed gap")
    log_lhs = 14 * math.log(pd.norm_X) + kappa * math.log(zeta)
    if mode == "beta_form":
        D = d_alpha_R(freq, pd.R)[0]
        log_rhs = math.log(1e-5) - 4 * math.log(D)
    elif mode == "diophantine_form":
        if dio is None:
            raise ValueError("diophantine_form needs a DioEstimate")
        log_rhs = (math.log(1e-5) - 4 * math.log(d_tau(dio.tau)) + 12 * math.log(dio.gamma)
                   + 4 * (4 * dio.tau + 1) * math.log(pd.R))
    else:
        raise ValueError("mode must be 'beta_form' or 'diophantine_form'")
    margin = log_rhs - log_lhs
    return GapBound(zeta ** (1 + kappa), zeta ** (1 - kappa), kappa, margin >= 0, mode,
                    margin, math.exp(log_lhs), math.exp(log_rhs))


def lemma_checks(pd: ParabolicData, kappa: float = 0.2) -> dict:
    """The two averaged-entry inequalities for a normal form.

    lower_ok: [X11^2] >= (2 |X|_T)^-2.  det_ok: [X11^2][X12^2] - [X11 X12]^2 >=
    8 zeta^{2 kappa}, checked only when |X|_R zeta^{kappa/2} <= 1/4.
    """
    s, t, m = pd.averages()
    nT = pd.norm_on_torus()
    hyp = pd.norm_X * pd.zeta ** (kappa / 2) <= 0.25
    det = s * t - m * m
    return {"x11_sq": s, "lower_bound": (2 * nT) ** -2, "lower_ok": s >= (2 * nT) ** -2,
            "hypothesis": hyp, "det": det, "det_bound": 8 * pd.zeta ** (2 * kappa),
            "det_ok": (not hyp) or det >= 8 * pd.zeta ** (2 * kappa)}

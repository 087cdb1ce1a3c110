"""Continued fractions, convergents and Diophantine data of a frequency."""

from __future__ import annotations

import math
from dataclasses import dataclass

import mpmath
import numpy as np

from .errors import PrecisionExhausted, RationalInput

DEFAULT_PREC = 128
DEFAULT_DEPTH = 40


@dataclass(frozen=True)
class Frequency:
    """An irrational rotation number together with its expansion data.

    ``a`` holds the partial quotients a_1..a_depth.  ``p`` and ``q`` hold the
    convergents p_0..p_depth and q_0..q_depth, so ``q[n]`` is q_n.
    """

    alpha: mpmath.mpf
    a: tuple
    p: tuple
    q: tuple
    beta_hat: float
    depth: int
    prec: int = DEFAULT_PREC

    @property
    def value(self) -> float:
        return float(self.alpha)

    def convergent(self, n: int) -> tuple[int, int]:
        return self.p[n], self.q[n]

    def best_approximant(self, q_max: int) -> tuple[int, int]:
        """Largest convergent p_n/q_n with q_n <= q_max."""
        best = (self.p[1], self.q[1])
        for pn, qn in zip(self.p[1:], self.q[1:]):
            if qn > q_max:
                break
            best = (pn, qn)
        return best

    def frac_multiples(self, ks) -> np.ndarray:
        """{k alpha} for integer k, accurate to ~1e-16 + |k| 2^-64."""
        return _frac_multiples(self.alpha, ks)

    def torus_norm_multiples(self, ks) -> np.ndarray:
        f = self.frac_multiples(ks)
        return np.minimum(f, 1.0 - f)


def _fixed_point(alpha) -> np.uint64:
    with mpmath.workprec(160):
        scaled = mpmath.floor(mpmath.mpf(alpha) * mpmath.mpf(2) ** 64)
    return np.uint64(int(scaled) % 2**64)


def _frac_multiples(alpha, ks) -> np.ndarray:
    ks = np.asarray(ks, dtype=np.int64)
    A = _fixed_point(alpha)
    with np.errstate(over="ignore"):
        prod = ks.astype(np.uint64) * A
    return prod.astype(np.float64) / 2.0**64 % 1.0


def torus_norm(x):
    """Distance to the nearest integer; works on scalars, mpf values and arrays."""
    if isinstance(x, mpmath.mpf):
        return abs(x - mpmath.nint(x))
    if np.ndim(x) == 0:
        x = float(x)
        return abs(x - round(x))
    x = np.asarray(x, dtype=float)
    return np.abs(x - np.round(x))


def cf_expand(alpha, depth: int = DEFAULT_DEPTH, prec: int = DEFAULT_PREC) -> Frequency:
    """Expand ``alpha`` in (0, 1) into ``depth`` partial quotients.

    ``alpha`` may be a float (taken as its exact binary value), a decimal
    string or an mpf.  The expansion runs at ``prec`` bits.
    """
    if depth < 1:
        raise ValueError("depth must be >= 1")
    with mpmath.workprec(prec):
        x0 = mpmath.mpf(alpha)
        if not (0 < x0 < 1):
            raise ValueError("alpha must lie in (0, 1)")
        eps = mpmath.mpf(2) ** (-prec)
        a: list[int] = []
        p = [0, 1]
        q = [1]
        x = x0
        for k in range(1, depth + 1):
            if x < 10 * eps:
                raise RationalInput(f"expansion terminates after {k - 1} quotients")
            inv = 1 / x
            ak = int(mpmath.floor(inv))
            x = inv - ak
            a.append(ak)
            if k == 1:
                q.append(ak)
            else:
                p.append(ak * p[-1] + p[-2])
                q.append(ak * q[-1] + q[-2])
            # The remainder carries a relative error of order q_k^2 2^-prec.
            if q[-1] ** 2 * eps > 1e-6:
                raise PrecisionExhausted(
                    f"{prec} bits cannot support {depth} quotients (q_{k} = {q[-1]})")
        freq = Frequency(alpha=x0, a=tuple(a), p=tuple(p), q=tuple(q),
                         beta_hat=0.0, depth=depth, prec=prec)
    beta = beta_estimate(freq) if depth >= 3 else 0.0
    return Frequency(alpha=x0, a=freq.a, p=freq.p, q=freq.q,
                     beta_hat=beta, depth=depth, prec=prec)


def alpha_from_quotients(a, prec: int = DEFAULT_PREC) -> mpmath.mpf:
    """Value of [0; a_1, a_2, ...] for a finite quotient list."""
    with mpmath.workprec(prec):
        x = mpmath.mpf(0)
        for ak in reversed(list(a)):
            x = 1 / (ak + x)
        return +x


def beta_estimate(freq: Frequency, n0: int | None = None) -> float:
    """Running max of ln(q_{n+1})/q_n over n0 <= n < depth.

    This is an estimate of the limsup, not the limsup itself.  The default
    burn-in discards the first half of the expansion.
    """
    if freq.depth < 3:
        raise ValueError("beta_estimate needs depth >= 3")
    if n0 is None:
        n0 = max(2, freq.depth // 2 + 1)
    best = 0.0
    for n in range(n0, freq.depth):
        best = max(best, math.log(freq.q[n + 1]) / freq.q[n])
    return best


@dataclass(frozen=True)
class DioEstimate:
    gamma: float
    tau: float
    horizon: int
    k_min: int


def dio_estimate(freq: Frequency, tau: float, N: int) -> DioEstimate:
    """Best constant gamma with ||k alpha|| >= gamma/|k|^tau for 0 < |k| <= N."""
    if N < 1 or tau <= 0:
        raise ValueError("need N >= 1 and tau > 0")
    ks = np.arange(1, N + 1)
    vals = freq.torus_norm_multiples(ks) * ks.astype(float) ** tau
    i = int(np.argmin(vals))
    return DioEstimate(gamma=float(vals[i]), tau=tau, horizon=N, k_min=int(ks[i]))


def sdc_check(freq: Frequency, gamma: float, tau: float, N: int) -> bool:
    """Scan ||k alpha|| >= gamma / (|k| (ln|k|)^tau) for 2 <= |k| <= N."""
    ks = np.arange(2, N + 1)
    bound = gamma / (ks * np.log(ks) ** tau)
    return bool(np.all(freq.torus_norm_multiples(ks) >= bound))


def golden(depth: int = DEFAULT_DEPTH, prec: int = DEFAULT_PREC) -> Frequency:
    with mpmath.workprec(prec + 32):
        alpha = (mpmath.sqrt(5) - 1) / 2
    return cf_expand(alpha, depth, prec)


def sqrt2m1(depth: int = DEFAULT_DEPTH, prec: int = DEFAULT_PREC) -> Frequency:
    with mpmath.workprec(prec + 32):
        alpha = mpmath.sqrt(2) - 1
    return cf_expand(alpha, depth, prec)


PRESETS = {"golden": golden, "silver": sqrt2m1, "sqrt2m1": sqrt2m1}


def parse_frequency(text: str, depth: int = DEFAULT_DEPTH,
                    prec: int = DEFAULT_PREC) -> Frequency:
    """Preset name or a literal decimal, parsed at ``prec`` bits."""
    name = text.strip().lower()
    if name in PRESETS:
        return PRESETS[name](depth, prec)
    with mpmath.workprec(prec):
        return cf_expand(mpmath.mpf(name), depth, prec)

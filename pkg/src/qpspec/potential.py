"""Finitely supported Fourier series on the torus and their strip norms.

A series is stored densely: ``c[N + n]`` is the coefficient of
e^{2 pi i n z / period}.  ``period`` is 1 for functions on the torus and 2 for
the antiperiodic conjugacies that appear when reducing in PSL(2, R).
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

_REALITY_TOL = 1e-12


def _as_dense(coeffs) -> tuple[np.ndarray, int]:
    if isinstance(coeffs, dict):
        N = max((abs(int(n)) for n in coeffs), default=0)
        c = np.zeros(2 * N + 1, dtype=complex)
        for n, v in coeffs.items():
            c[N + int(n)] += complex(v)
        return c, N
    c = np.asarray(coeffs, dtype=complex)
    if c.ndim != 1 or c.size % 2 == 0:
        raise ValueError("dense coefficients need odd length 2N+1")
    return c.copy(), (c.size - 1) // 2


def _is_real_series(c: np.ndarray) -> bool:
    scale = max(1.0, float(np.abs(c).max(initial=0.0)))
    return bool(np.abs(c - np.conj(c[::-1])).max(initial=0.0) <= _REALITY_TOL * scale)


def _trim(c: np.ndarray) -> np.ndarray:
    """Drop exactly-zero outer mode pairs."""
    N = (c.size - 1) // 2
    while N > 0 and c[0] == 0 and c[-1] == 0:
        c = c[1:-1]
        N -= 1
    return c


@dataclass(frozen=True, eq=False)
class TrigPolynomial:
    c: np.ndarray
    period: int = 1
    reality: bool = False

    def __post_init__(self):
        c = np.asarray(self.c, dtype=complex)
        c.setflags(write=False)
        object.__setattr__(self, "c", c)
        if self.reality and not _is_real_series(c):
            raise ValueError("reality flag set but coefficients are not conjugate-symmetric")

    @classmethod
    def from_coeffs(cls, coeffs, period: int = 1, reality: bool | None = None):
        c, _ = _as_dense(coeffs)
        if reality is None:
            reality = _is_real_series(c)
        return cls(c, period, reality)

    @classmethod
    def constant(cls, value, period: int = 1):
        return cls(np.array([value], dtype=complex), period, np.imag(value) == 0)

    @classmethod
    def from_grid(cls, values, period: int = 1, N: int | None = None,
                  reality: bool | None = None):
        """Interpolate samples at z_m = period*m/M, m = 0..M-1."""
        values = np.asarray(values)
        M = values.size
        f = np.fft.fft(values) / M
        if N is None:
            N = (M - 1) // 2
        idx = np.arange(-N, N + 1) % M
        c = f[idx]
        if reality is None:
            reality = bool(np.isrealobj(values))
        if reality:
            c = 0.5 * (c + np.conj(c[::-1]))
        return cls(c, period, reality)

    @property
    def N(self) -> int:
        return (self.c.size - 1) // 2

    @property
    def modes(self) -> np.ndarray:
        return np.arange(-self.N, self.N + 1)

    @property
    def coeffs(self) -> dict:
        return {int(n): complex(v) for n, v in zip(self.modes, self.c) if v != 0}

    def __getitem__(self, n: int) -> complex:
        n = int(n)
        return complex(self.c[self.N + n]) if abs(n) <= self.N else 0j

    def evaluate(self, z):
        z = np.asarray(z)
        phase = np.exp(2j * np.pi * np.multiply.outer(z, self.modes) / self.period)
        out = phase @ self.c
        if self.reality and np.isrealobj(z):
            return out.real
        return out

    __call__ = evaluate

    def analytic_norm(self, h: float = 0.0) -> float:
        return analytic_norm(self, h)

    def mean(self) -> complex:
        return self[0]

    def shift(self, alpha: float) -> "TrigPolynomial":
        """The series of z -> f(z + alpha)."""
        w = np.exp(2j * np.pi * self.modes * float(alpha) / self.period)
        return TrigPolynomial(self.c * w, self.period, False)

    def pad(self, N: int) -> np.ndarray:
        """Dense coefficient vector padded or cut to support N."""
        out = np.zeros(2 * N + 1, dtype=complex)
        m = min(N, self.N)
        out[N - m:N + m + 1] = self.c[self.N - m:self.N + m + 1]
        return out

    def _coerce(self, other):
        if isinstance(other, TrigPolynomial):
            if other.period != self.period:
                raise ValueError("period mismatch")
            return other
        return TrigPolynomial.constant(other, self.period)

    def __add__(self, other):
        other = self._coerce(other)
        N = max(self.N, other.N)
        return TrigPolynomial(self.pad(N) + other.pad(N), self.period,
                              self.reality and other.reality)

    __radd__ = __add__

    def __neg__(self):
        return TrigPolynomial(-self.c, self.period, self.reality)

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, TrigPolynomial):
            other = self._coerce(other)
            return TrigPolynomial(np.convolve(self.c, other.c), self.period,
                                  self.reality and other.reality)
        return TrigPolynomial(self.c * other, self.period,
                              self.reality and np.isrealobj(other))

    __rmul__ = __mul__

    def trimmed(self) -> "TrigPolynomial":
        return TrigPolynomial(_trim(self.c), self.period, self.reality)

    def to_json(self) -> str:
        rows = [[int(n), float(v.real), float(v.imag)]
                for n, v in zip(self.modes, self.c) if v != 0]
        return json.dumps(rows)

    @classmethod
    def from_json(cls, text: str, period: int = 1):
        return cls.from_coeffs({n: complex(re, im) for n, re, im in json.loads(text)},
                               period)

    def __repr__(self):
        return f"TrigPolynomial(N={self.N}, period={self.period}, coeffs={self.coeffs})"


def _weights(N: int, h: float, period: int) -> np.ndarray:
    return np.exp(2 * np.pi * h * np.abs(np.arange(-N, N + 1)) / period)


def analytic_norm(f: TrigPolynomial, h: float = 0.0) -> float:
    """Weighted l1 majorant sum |c_n| e^{2 pi h |n|} of the sup norm on |Im z| < h."""
    if h < 0:
        raise ValueError("h must be >= 0")
    return float(np.sum(np.abs(f.c) * _weights(f.N, h, f.period)))


def evaluate(f: TrigPolynomial, z):
    return f.evaluate(z)


def amo_potential(lam: float) -> TrigPolynomial:
    """2 lam cos(2 pi z)."""
    return TrigPolynomial(np.array([lam, 0.0, lam], dtype=complex), 1, True)


def truncate(f: TrigPolynomial, N: int, h: float = 0.0) -> tuple[TrigPolynomial, float]:
    """Drop modes with |n| > N; returns the truncated series and the dropped norm at h."""
    if N < 0:
        raise ValueError("N must be >= 0")
    if N >= f.N:
        return f, 0.0
    w = _weights(f.N, h, f.period)
    keep = np.abs(f.modes) <= N
    tail = float(np.sum(np.abs(f.c[~keep]) * w[~keep]))
    return TrigPolynomial(f.c[keep], f.period, f.reality), tail


class TrigMatrix:
    """2x2 matrix-valued Fourier series stored as an array of shape (2N+1, 2, 2)."""

    def __init__(self, c, period: int = 1):
        c = np.asarray(c, dtype=complex)
        if c.ndim != 3 or c.shape[1:] != (2, 2) or c.shape[0] % 2 == 0:
            raise ValueError("TrigMatrix coefficients need shape (2N+1, 2, 2)")
        self.c = c
        self.period = period

    @classmethod
    def from_entries(cls, entries) -> "TrigMatrix":
        flat = [entries[i][j] for i in range(2) for j in range(2)]
        polys = [e if isinstance(e, TrigPolynomial) else TrigPolynomial.constant(e)
                 for e in flat]
        period = max(p.period for p in polys)
        N = max(p.N for p in polys)
        c = np.stack([p.pad(N) for p in polys], axis=-1).reshape(2 * N + 1, 2, 2)
        return cls(c, period)

    @classmethod
    def constant(cls, A, period: int = 1) -> "TrigMatrix":
        return cls(np.asarray(A, dtype=complex)[None], period)

    @classmethod
    def from_grid(cls, values, period: int = 1, N: int | None = None) -> "TrigMatrix":
        values = np.asarray(values)
        M = values.shape[0]
        f = np.fft.fft(values, axis=0) / M
        if N is None:
            N = (M - 1) // 2
        return cls(f[np.arange(-N, N + 1) % M], period)

    @property
    def N(self) -> int:
        return (self.c.shape[0] - 1) // 2

    @property
    def modes(self) -> np.ndarray:
        return np.arange(-self.N, self.N + 1)

    def entry(self, i: int, j: int) -> TrigPolynomial:
        c = self.c[:, i, j]
        return TrigPolynomial(c, self.period, _is_real_series(c))

    def entries(self):
        return [[self.entry(i, j) for j in range(2)] for i in range(2)]

    def mean(self) -> np.ndarray:
        return self.c[self.N]

    def evaluate(self, z) -> np.ndarray:
        z = np.asarray(z)
        phase = np.exp(2j * np.pi * np.multiply.outer(z, self.modes) / self.period)
        return np.tensordot(phase, self.c, axes=([-1], [0]))

    __call__ = evaluate

    def entry_norms(self, h: float = 0.0) -> np.ndarray:
        w = _weights(self.N, h, self.period)
        return np.einsum("n,nij->ij", w, np.abs(self.c))

    def analytic_norm(self, h: float = 0.0) -> float:
        """Max row sum of the entrywise strip norms (dominates the operator sup norm)."""
        return float(self.entry_norms(h).sum(axis=1).max())

    def pad(self, N: int) -> np.ndarray:
        out = np.zeros((2 * N + 1, 2, 2), dtype=complex)
        m = min(N, self.N)
        out[N - m:N + m + 1] = self.c[self.N - m:self.N + m + 1]
        return out

    def __add__(self, other):
        if not isinstance(other, TrigMatrix):
            other = TrigMatrix.constant(other, self.period)
        N = max(self.N, other.N)
        return TrigMatrix(self.pad(N) + other.pad(N), max(self.period, other.period))

    def __sub__(self, other):
        if not isinstance(other, TrigMatrix):
            other = TrigMatrix.constant(other, self.period)
        return self + TrigMatrix(-other.c, other.period)

    def __matmul__(self, other):
        """Exact product by coefficient convolution."""
        if not isinstance(other, TrigMatrix):
            return TrigMatrix(np.einsum("nij,jk->nik", self.c, np.asarray(other)), self.period)
        if other.period != self.period:
            raise ValueError("period mismatch")
        N = self.N + other.N
        out = np.zeros((2 * N + 1, 2, 2), dtype=complex)
        for i in range(2):
            for j in range(2):
                for k in range(2):
                    out[:, i, j] += np.convolve(self.c[:, i, k], other.c[:, k, j])
        return TrigMatrix(out, self.period)

    def __rmatmul__(self, A):
        return TrigMatrix(np.einsum("ij,njk->nik", np.asarray(A), self.c), self.period)

    def shift(self, alpha: float) -> "TrigMatrix":
        w = np.exp(2j * np.pi * self.modes * float(alpha) / self.period)
        return TrigMatrix(self.c * w[:, None, None], self.period)

    def truncated(self, N: int) -> "TrigMatrix":
        return TrigMatrix(self.pad(min(N, self.N)), self.period)

    def to_jsonable(self) -> dict:
        return {"period": self.period,
                "entries": [[json.loads(self.entry(i, j).to_json()) for j in range(2)]
                            for i in range(2)]}

    def __repr__(self):
        return f"TrigMatrix(N={self.N}, period={self.period})"

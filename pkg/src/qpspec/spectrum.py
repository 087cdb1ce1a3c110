"""Periodic-approximant spectra, gaps, gap labels and butterfly datasets."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .arithmetic import Frequency, torus_norm
from .errors import AmbiguousLabel, InvalidRational
from .potential import TrigPolynomial, amo_potential


@dataclass(frozen=True, eq=False)
class BandSet:
    """Sorted disjoint closed intervals, shape (m, 2).

    ``counts[i]`` is the number of approximant bands merged into interval i and
    ``raw`` keeps the unmerged bands when the set comes from an approximant.
    """

    intervals: np.ndarray
    source: dict = field(default_factory=dict)
    counts: np.ndarray | None = None
    raw: np.ndarray | None = None

    def __post_init__(self):
        iv = np.asarray(self.intervals, dtype=float).reshape(-1, 2)
        if not np.all(np.isfinite(iv)):
            raise ValueError("band edges must be finite")
        if np.any(iv[:, 0] > iv[:, 1]) or np.any(iv[1:, 0] <= iv[:-1, 1]):
            raise ValueError("intervals must be sorted, disjoint and nonempty")
        object.__setattr__(self, "intervals", iv)

    def __len__(self):
        return len(self.intervals)

    @property
    def lo(self) -> float:
        return float(self.intervals[0, 0])

    @property
    def hi(self) -> float:
        return float(self.intervals[-1, 1])

    @property
    def diam(self) -> float:
        return self.hi - self.lo

    def contains(self, E) -> np.ndarray:
        E = np.asarray(E, dtype=float)
        i = np.searchsorted(self.intervals[:, 0], E, side="right") - 1
        ok = i >= 0
        ic = np.clip(i, 0, None)
        return ok & (E <= self.intervals[ic, 1])

    def scaled(self, s: float) -> "BandSet":
        iv = self.intervals * s
        if s < 0:
            iv = iv[::-1, ::-1]
        raw = None if self.raw is None else np.sort(self.raw * s, axis=1)[::(1 if s > 0 else -1)]
        counts = None if self.counts is None else self.counts[::(1 if s > 0 else -1)]
        return BandSet(iv, dict(self.source, scale=s), counts, raw)


@dataclass(frozen=True)
class GapRecord:
    k: int | None
    E_minus: float
    E_plus: float
    size: float
    ids_value: float
    label_residual: float
    status: str = "labeled"
    candidates: tuple = ()


def merge_intervals(raw, tol: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """Union of closed intervals; pieces closer than tol are joined."""
    raw = np.asarray(raw, dtype=float).reshape(-1, 2)
    order = np.argsort(raw[:, 0], kind="stable")
    out, counts = [], []
    for l, r in raw[order]:
        if out and l <= out[-1][1] + tol:
            out[-1][1] = max(out[-1][1], r)
            counts[-1] += 1
        else:
            out.append([l, r])
            counts.append(1)
    return np.array(out), np.array(counts)


def _bloch_eigs(diag: np.ndarray) -> np.ndarray:
    """Sorted union of periodic and antiperiodic eigenvalues, one row per diagonal.

    ``diag`` has shape (T, q).  Returns shape (T, 2q).
    """
    T, q = diag.shape
    H = np.zeros((T, 2, q, q))
    idx = np.arange(q)
    H[:, :, idx, idx] = diag[:, None, :]
    if q == 1:
        H[:, 0, 0, 0] += 2.0
        H[:, 1, 0, 0] -= 2.0
    else:
        H[:, :, idx[:-1], idx[1:]] += 1.0
        H[:, :, idx[1:], idx[:-1]] += 1.0
        for b, s in enumerate((1.0, -1.0)):
            H[:, b, 0, q - 1] += s
            H[:, b, q - 1, 0] += s
    ev = np.linalg.eigvalsh(H).reshape(T, 2 * q)
    return np.sort(ev, axis=1)


def _amo_phase(V: TrigPolynomial) -> float | None:
    """If V = c + 2|v| cos 2 pi (z + phi), return phi, else None."""
    co = V.coeffs
    if set(co) - {-1, 0, 1} or 1 not in co:
        return None
    return math.atan2(co[1].imag, co[1].real) / (2 * math.pi)


def raw_bands(V: TrigPolynomial, p: int, q: int, theta_grid: int | None = None) -> np.ndarray:
    """The q bands of the union over theta of the period-q spectra, shape (q, 2).

    For one fixed theta the j-th band runs between the 2j-th and (2j+1)-th of the
    pooled periodic/antiperiodic eigenvalues.  For a single cosine the union over
    theta is attained at the two extremal phases of the Chambers relation, so
    only those are sampled; otherwise a theta grid over one period 1/q is used.
    """
    if q < 1 or p < 0 or math.gcd(p, q) != 1 or (q > 1 and p >= q):
        raise InvalidRational(f"{p}/{q} is not a reduced fraction in [0, 1)")
    phi = _amo_phase(V)
    if phi is not None:
        thetas = np.array([0.0, 0.5 / q]) - phi
    elif V.N == 0:
        thetas = np.zeros(1)
    else:
        T = theta_grid or 2 * q
        thetas = np.arange(T) / (T * q)
    j = np.arange(q)
    x = thetas[:, None] + j[None, :] * (p / q)
    diag = np.real(V.evaluate(x % 1.0))
    ev = _bloch_eigs(diag)
    lo = ev[:, 0::2].min(axis=0)
    hi = ev[:, 1::2].max(axis=0)
    return np.stack([lo, hi], axis=1)


def approximant_bands(V: TrigPolynomial, pq, theta_grid: int | None = None,
                      tol: float = 1e-12) -> BandSet:
    """Spectrum of the rational approximant p/q, merged into disjoint intervals."""
    if isinstance(pq, Fraction):
        p, q = pq.numerator, pq.denominator
    else:
        p, q = pq
    raw = raw_bands(V, int(p), int(q), theta_grid)
    iv, counts = merge_intervals(raw, tol)
    return BandSet(iv, {"p": int(p), "q": int(q), "theta_grid": theta_grid, "tol": tol},
                   counts, raw)


def detect_gaps(bands: BandSet, floor: float = 1e-10) -> list[tuple[float, float]]:
    iv = bands.intervals
    out = []
    for r, l in zip(iv[:-1, 1], iv[1:, 0]):
        if l - r > floor:
            out.append((float(r), float(l)))
    return out


def approximant_ids(bands: BandSet):
    """IDS of the periodic approximant: exactly j/q in the j-th gap.

    Inside a band the count is interpolated linearly, which is only used for
    plotting; labels are read in gaps where the value is exact.
    """
    if bands.raw is None:
        raise ValueError("band set carries no raw approximant bands")
    raw = bands.raw
    q = len(raw)
    width = np.maximum(raw[:, 1] - raw[:, 0], 1e-300)

    def ids(E):
        E = np.asarray(E, dtype=float)
        frac = np.clip((E[..., None] - raw[:, 0]) / width, 0.0, 1.0)
        return frac.sum(axis=-1) / q

    return ids


def label_gaps(gaps, ids_fn, freq: Frequency, K: int = 50, tol: float = 1e-3,
               strict: bool = False, include_unbounded: bool = False,
               bands: BandSet | None = None) -> list[GapRecord]:
    """Attach to each gap the k in [-K, K] with N_G closest to k alpha mod 1.

    A gap whose best residual exceeds ``tol`` is marked ``unlabeled``.  Two
    candidates within ``tol`` mark it ``ambiguous``; with ``strict`` that
    raises AmbiguousLabel instead.
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    ks = np.arange(-K, K + 1)
    ks = ks[ks != 0]
    fk = freq.frac_multiples(ks)
    out = []
    if include_unbounded:
        if bands is None:
            raise ValueError("include_unbounded needs the band set")
        out.append(GapRecord(0, -math.inf, bands.lo, math.inf, 0.0, 0.0))
    for lo, hi in gaps:
        N = float(ids_fn(0.5 * (lo + hi)))
        res = torus_norm(N - fk)
        order = np.argsort(res, kind="stable")
        best = order[0]
        k, r = int(ks[best]), float(res[best])
        close = [int(ks[i]) for i in order if res[i] <= tol]
        if r > tol:
            rec = GapRecord(None, lo, hi, hi - lo, N, r, "unlabeled")
        elif len(close) > 1:
            if strict:
                raise AmbiguousLabel(f"gap ({lo}, {hi}) matches k in {close}", close)
            rec = GapRecord(None, lo, hi, hi - lo, N, r, "ambiguous", tuple(close))
        else:
            rec = GapRecord(k, lo, hi, hi - lo, N, r)
        out.append(rec)
    if include_unbounded:
        out.append(GapRecord(0, bands.hi, math.inf, math.inf, 1.0, 0.0))
    return out


def band_measure(bands: BandSet) -> float:
    iv = bands.intervals
    return float(np.sum(iv[:, 1] - iv[:, 0]))


def _directed_hausdorff(A: BandSet, B: BandSet) -> float:
    """sup over a in A of dist(a, B)."""
    ivB = B.intervals

    def dist_to_B(x):
        x = np.asarray(x, dtype=float)
        d = np.maximum(ivB[:, 0][None] - x[:, None], x[:, None] - ivB[:, 1][None])
        return np.maximum(d, 0).min(axis=1)

    pts = [A.intervals.ravel()]
    mids = 0.5 * (ivB[:-1, 1] + ivB[1:, 0])
    pts.append(mids[A.contains(mids)])
    return float(dist_to_B(np.concatenate(pts)).max())


def hausdorff_distance(A: BandSet, B: BandSet) -> float:
    return max(_directed_hausdorff(A, B), _directed_hausdorff(B, A))


def coprime_fractions(q_max: int):
    for q in range(2, q_max + 1):
        for p in range(1, q):
            if math.gcd(p, q) == 1:
                yield p, q


def butterfly_sweep(lam: float, q_max: int, out=None, tol: float = 1e-12,
                    map_fn=map) -> list[tuple[int, int, np.ndarray]]:
    """Band intervals of the almost Mathieu approximants for all p/q, q <= q_max.

    Rows are written as CSV ``p,q,l_1,r_1,...`` to ``out`` (a path or a text
    stream) when given.  ``map_fn`` may be a pool's ordered map.
    """
    if q_max < 2:
        raise ValueError("q_max must be >= 2")
    V = amo_potential(lam)
    pqs = list(coprime_fractions(q_max))
    sets = list(map_fn(lambda pq: approximant_bands(V, pq, tol=tol).intervals, pqs))
    rows = [(p, q, iv) for (p, q), iv in zip(pqs, sets)]
    if out is not None:
        write_butterfly_csv(rows, out)
    return rows


def write_butterfly_csv(rows, out):
    if isinstance(out, (str, bytes)) or hasattr(out, "__fspath__"):
        with open(out, "w", newline="") as fh:
            return write_butterfly_csv(rows, fh)
    w = csv.writer(out, lineterminator="\n")
    for p, q, iv in rows:
        w.writerow([p, q] + [repr(float(x)) for x in np.asarray(iv).ravel()])


def butterfly_csv_text(rows) -> str:
    buf = io.StringIO()
    write_butterfly_csv(rows, buf)
    return buf.getvalue()

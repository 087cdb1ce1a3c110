"""Homogeneity of band sets and the gap-separation homogeneity criterion."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import H3Violated, UnlabeledGaps
from .spectrum import BandSet, GapRecord


@dataclass(frozen=True)
class HomogeneityReport:
    mu_hat: float
    worst_E: float
    worst_eps: float
    grid: dict = field(default_factory=dict)

    def to_jsonable(self) -> dict:
        return {"mu_hat": self.mu_hat, "worst_E": self.worst_E,
                "worst_eps": self.worst_eps, "grid": self.grid}


@dataclass(frozen=True)
class CriterionInput:
    sigma: float
    C: float
    vartheta: float
    beta: float
    interval: tuple[float, float]
    gaps: tuple = ()

    def __post_init__(self):
        if not 0 < self.sigma < 1:
            raise ValueError("sigma must lie in (0, 1)")
        if self.C <= 0 or self.vartheta <= 0:
            raise ValueError("C and vartheta must be positive")
        if self.beta < 0:
            raise ValueError("beta must be >= 0")
        a, b = self.interval
        if not a < b:
            raise ValueError("interval must satisfy a < b")
        object.__setattr__(self, "gaps", tuple(self.gaps))

    @property
    def h3_ok(self) -> bool:
        return self.beta <= self.sigma * self.vartheta / 2


def _overlaps(bands: BandSet, E: float, eps: np.ndarray) -> np.ndarray:
    # Work in coordinates centered at E so a window touching an edge is exact.
    lo = bands.intervals[:, 0] - E
    hi = bands.intervals[:, 1] - E
    i0 = np.searchsorted(hi, -eps.max(), side="left")
    i1 = np.searchsorted(lo, eps.max(), side="right")
    lo, hi = lo[i0:i1, None], hi[i0:i1, None]
    w = np.minimum(hi, eps[None, :]) - np.maximum(lo, -eps[None, :])
    return np.clip(w, 0.0, None).sum(axis=0)


def portion_measure(bands: BandSet, E: float, eps: float) -> float:
    """|bands ∩ (E - eps, E + eps)|."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    return float(_overlaps(bands, float(E), np.array([float(eps)]))[0])


def default_grids(bands: BandSet, n_E: int = 200, n_eps: int = 40,
                  gap_floor: float = 1e-10) -> tuple[np.ndarray, np.ndarray]:
    """Energy grid of band edges plus interior samples, and a log-uniform eps grid.

    When there are more edges than half the budget, the edges flanking the
    widest gaps are kept.  Interior samples sit at equally spaced quantiles of
    the band measure.
    """
    iv = bands.intervals
    m = len(iv)
    gaps = iv[1:, 0] - iv[:-1, 1]
    n_edges = min(2 * m, max(2, n_E // 2))
    if 2 * m <= n_edges:
        edges = iv.ravel()
    else:
        pairs = np.argsort(-gaps, kind="stable")[: (n_edges - 2) // 2]
        edges = np.concatenate([[bands.lo, bands.hi], iv[pairs, 1], iv[pairs + 1, 0]])
    n_int = max(n_E - len(edges), 0)
    lengths = iv[:, 1] - iv[:, 0]
    total = lengths.sum()
    if n_int and total > 0:
        targets = (np.arange(n_int) + 0.5) / n_int * total
        cum = np.concatenate([[0.0], np.cumsum(lengths)])
        j = np.clip(np.searchsorted(cum, targets, side="right") - 1, 0, m - 1)
        interior = iv[j, 0] + (targets - cum[j])
    else:
        interior = np.empty(0)
    E_grid = np.unique(np.concatenate([edges, interior]))
    lo = min(max(gap_floor, 1e-300), bands.diam)
    eps_grid = np.geomspace(lo, bands.diam, n_eps) if bands.diam > 0 else np.array([1.0])
    return E_grid, eps_grid


def homogeneity_scan(bands: BandSet, E_grid=None, eps_grid=None, n_E: int = 200,
                     n_eps: int = 40, gap_floor: float = 1e-10) -> HomogeneityReport:
    """min over the grid of |bands ∩ (E - eps, E + eps)| / eps.

    Energies outside the bands are discarded; with no grids given the
    defaults of ``default_grids`` are used.
    """
    if E_grid is None or eps_grid is None:
        dE, deps = default_grids(bands, n_E, n_eps, gap_floor)
        E_grid = dE if E_grid is None else E_grid
        eps_grid = deps if eps_grid is None else eps_grid
    E = np.asarray(E_grid, dtype=float).ravel()
    eps = np.asarray(eps_grid, dtype=float).ravel()
    if E.size == 0 or eps.size == 0:
        raise ValueError("grids must be nonempty")
    if np.any(eps <= 0):
        raise ValueError("eps_grid must be positive")
    E = E[bands.contains(E)]
    if E.size == 0:
        raise ValueError("no grid energy lies in the bands")
    ratio = np.array([_overlaps(bands, e, eps) for e in E]) / eps[None, :]
    # Ties go to the largest eps.
    i, jr = np.unravel_index(np.argmin(ratio[:, ::-1]), ratio.shape)
    j = ratio.shape[1] - 1 - jr
    return HomogeneityReport(float(ratio[i, j]), float(E[i]), float(eps[j]),
                             {"n_E": int(E.size), "n_eps": int(eps.size),
                              "eps_min": float(eps.min()), "eps_max": float(eps.max())})


def _meets(g: GapRecord, a: float, b: float) -> bool:
    return g.E_minus <= b and g.E_plus >= a


def criterion_check(inp: CriterionInput, eps_tilde: float = 0.0, eps0: float | None = None,
                    bands: BandSet | None = None, spectrum_range: tuple | None = None) -> dict:
    """Check the hypotheses and gap-separation bounds of the homogeneity criterion.

    C12 is the largest constant for which every separation inequality holds
    with exponent beta/sigma + eps_tilde.  The end-of-spectrum bounds are
    included when ``a`` (``b``) is the bottom (top) of ``spectrum_range``.
    The implied mu is 3 eps0 / (4 diam); with ``bands`` the measured ratio at
    scales up to eps0 is reported next to it.
    """
    if not inp.h3_ok:
        raise H3Violated(f"beta={inp.beta} exceeds sigma*vartheta/2={inp.sigma * inp.vartheta / 2}")
    a, b = inp.interval
    gaps = [g for g in inp.gaps if _meets(g, a, b) and math.isfinite(g.size)]
    unl = [g for g in gaps if g.k is None]
    if unl:
        raise UnlabeledGaps(f"{len(unl)} gaps meeting [{a}, {b}] carry no label")
    rate = inp.beta / inp.sigma + eps_tilde
    constants = []
    violations = []
    for i, g in enumerate(gaps):
        for h in gaps[i + 1:]:
            if g.k == h.k:
                continue
            lo, hi = (g, h) if g.E_plus <= h.E_minus else (h, g)
            dist = max(hi.E_minus - lo.E_plus, 0.0)
            constants.append(("pair", g.k, h.k, dist * math.exp(rate * abs(g.k - h.k))))
    if spectrum_range is not None:
        lo_s, hi_s = spectrum_range
        for g in gaps:
            if a <= lo_s:
                constants.append(("bottom", g.k, None, abs(g.E_minus - lo_s) * math.exp(rate * abs(g.k))))
            if b >= hi_s:
                constants.append(("top", g.k, None, abs(g.E_plus - hi_s) * math.exp(rate * abs(g.k))))
    C12 = min((c[3] for c in constants), default=math.inf)
    for kind, k1, k2, c in constants:
        if c <= 0:
            violations.append({"kind": kind, "k": k1, "k2": k2, "constant": c})
    h2 = [{"kind": "h2", "k": g.k, "size": g.size, "bound": inp.C * math.exp(-inp.vartheta * abs(g.k))}
          for g in gaps if g.size > inp.C * math.exp(-inp.vartheta * abs(g.k))]
    violations.extend(h2)
    report = {"C12": C12, "h3_ok": True, "n_gaps": len(gaps), "n_inequalities": len(constants),
              "violations": violations}
    if eps0 is not None:
        if eps0 <= 0:
            raise ValueError("eps0 must be positive")
        diam = bands.diam if bands is not None else (b - a)
        report["eps0"] = eps0
        report["mu_implied"] = min(0.75, 0.75 * eps0 / diam)
        if bands is not None:
            E_grid, eps_grid = default_grids(bands)
            E_grid = E_grid[(E_grid >= a) & (E_grid <= b)]
            eps_grid = eps_grid[eps_grid <= eps0]
            if E_grid.size and eps_grid.size:
                report["mu_measured"] = homogeneity_scan(bands, E_grid, eps_grid).mu_hat
    return report

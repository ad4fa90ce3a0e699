"""Probability measures on the half-line and the metrics used to compare them.

A measure is stored either as weighted atoms or as density values on a grid;
both expose a CDF, which is all the two metrics need.  Wasserstein-1 is the
area between CDFs, computed exactly for the piecewise-constant /
piecewise-linear representations used here.  The Levy metric is found by
bisection over the corridor half-width, checked on a finite evaluation grid
(documented tolerance 1e-4).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .errors import GridMismatchError
from .limit import LimitLaw, quantile

__all__ = [
    "Measure1D",
    "MeasurePath",
    "empirical",
    "wasserstein1",
    "levy",
    "sup_distance",
    "market_weights",
    "ranked_vs_limit",
    "measure_to_csv",
]

LEVY_TOL = 1e-4
_LEVY_GRID = 4096


class Measure1D:
    """A probability measure on [0, inf): weighted atoms or a grid density."""

    ATOMS = "atoms"
    GRID = "grid"

    __slots__ = ("kind", "x", "w", "_cum")

    def __init__(self, kind: str, x: np.ndarray, w: np.ndarray, cum: np.ndarray):
        self.kind = kind
        self.x = x
        self.w = w
        self._cum = cum

    @classmethod
    def from_atoms(cls, locations, weights=None) -> "Measure1D":
        locs = np.asarray(locations, dtype=float)
        if locs.ndim != 1 or len(locs) == 0:
            raise ValueError("need a nonempty 1-D array of atom locations")
        if weights is None:
            wts = np.full(len(locs), 1.0 / len(locs))
        else:
            wts = np.asarray(weights, dtype=float)
        if np.any(wts < 0):
            raise ValueError("atom weights must be nonnegative")
        if abs(wts.sum() - 1.0) > 1e-9:
            raise ValueError(f"atom weights must sum to 1, got {wts.sum()!r}")
        uniq, inv = np.unique(locs, return_inverse=True)
        agg = np.zeros(len(uniq))
        np.add.at(agg, inv, wts)
        keep = agg > 0
        uniq, agg = uniq[keep], agg[keep]
        return cls(cls.ATOMS, uniq, agg, np.cumsum(agg))

    @classmethod
    def from_grid(cls, x, values) -> "Measure1D":
        xs = np.asarray(x, dtype=float)
        vals = np.asarray(values, dtype=float)
        if xs.ndim != 1 or xs.shape != vals.shape or len(xs) < 2:
            raise ValueError("grid and values must be matching 1-D arrays")
        if np.any(np.diff(xs) <= 0):
            raise ValueError("grid must be strictly increasing")
        if np.any(vals < -1e-12):
            raise ValueError("density values must be nonnegative")
        vals = np.maximum(vals, 0.0)
        mass = np.trapezoid(vals, xs)
        # coarse grids under-resolve narrow densities; accept a few percent of
        # representational mass error and renormalize to exactly unit mass
        if abs(mass - 1.0) > 5e-2:
            raise ValueError(f"grid density mass {mass!r} is too far from 1")
        vals = vals / mass
        cum = np.concatenate([[0.0], cumulative_trapezoid(vals, xs)])
        cum /= cum[-1]
        cum[-1] = 1.0
        return cls(cls.GRID, xs, vals, cum)

    def cdf(self, q) -> np.ndarray:
        qs = np.asarray(q, dtype=float)
        if self.kind == self.ATOMS:
            idx = np.searchsorted(self.x, qs, side="right")
            cum = np.concatenate([[0.0], self._cum])
            return cum[idx]
        return np.clip(np.interp(qs, self.x, self._cum, left=0.0, right=1.0), 0.0, 1.0)

    def expect(self, f) -> float:
        """Pairing with a test function, integral of f against the measure."""
        if self.kind == self.ATOMS:
            return float(self.w @ f(self.x))
        return float(np.trapezoid(self.w * f(self.x), self.x))

    def mean(self) -> float:
        if self.kind == self.ATOMS:
            return float(self.w @ self.x)
        return float(np.trapezoid(self.w * self.x, self.x))

    def support(self) -> tuple[float, float]:
        return float(self.x[0]), float(self.x[-1])


@dataclass(frozen=True)
class MeasurePath:
    """One measure per node of an increasing time grid starting at 0."""

    times: np.ndarray
    measures: tuple[Measure1D, ...]

    def __post_init__(self):
        if len(self.times) != len(self.measures) or len(self.times) == 0:
            raise ValueError("need one measure per time node")
        if self.times[0] != 0.0 or np.any(np.diff(self.times) <= 0):
            raise ValueError("time grid must increase from 0")


def empirical(positions) -> Measure1D:
    """Uniform atoms at the given positions (duplicates merged)."""
    pos = np.asarray(positions, dtype=float)
    if pos.ndim != 1 or len(pos) == 0:
        raise ValueError("need a nonempty 1-D position vector")
    return Measure1D.from_atoms(pos)


def _knots(m: Measure1D) -> np.ndarray:
    return m.x


def wasserstein1(mu: Measure1D, nu: Measure1D) -> float:
    """Area between the two CDFs, exact for atom and grid representations."""
    xs = np.union1d(_knots(mu), _knots(nu))
    if len(xs) == 1:
        return 0.0
    f_right = [m.cdf(xs) for m in (mu, nu)]
    # CDF approaching the next knot from the left: constant for atoms,
    # continuous for grid densities
    f_left = [
        fr[:-1] if m.kind == Measure1D.ATOMS else fr[1:]
        for m, fr in zip((mu, nu), f_right)
    ]
    da = f_right[0][:-1] - f_right[1][:-1]
    db = f_left[0] - f_left[1]
    seg_len = np.diff(xs)
    cross = da * db < 0
    with np.errstate(divide="ignore", invalid="ignore"):
        crossing = 0.5 * (da * da + db * db) / np.abs(da - db)
    seg = np.where(cross, crossing, 0.5 * (np.abs(da) + np.abs(db)))
    return float(seg_len @ seg)


def _levy_feasible(mu: Measure1D, nu: Measure1D, eps: float, xs: np.ndarray) -> bool:
    f_lo = mu.cdf(xs - eps) - eps
    f_hi = mu.cdf(xs + eps) + eps
    g = nu.cdf(xs)
    slack = 1e-12
    return bool(np.all(f_lo <= g + slack) and np.all(g <= f_hi + slack))


def _levy_eval_points(mu: Measure1D, nu: Measure1D, eps: float) -> np.ndarray:
    lo = min(mu.x[0], nu.x[0]) - eps
    hi = max(mu.x[-1], nu.x[-1]) + eps
    span = max(hi - lo, 1e-12)
    probes = [np.concatenate([_knots(mu), _knots(nu)])]
    for shift in (-eps, 0.0, eps):
        probes.append(probes[0] + shift)
    pts = np.concatenate(probes)
    pts = np.concatenate([pts, pts - 1e-9 * span])
    if mu.kind == Measure1D.GRID or nu.kind == Measure1D.GRID:
        pts = np.concatenate([pts, np.linspace(lo, hi, _LEVY_GRID)])
    return np.unique(pts)


def levy(mu: Measure1D, nu: Measure1D) -> float:
    """Levy metric: smallest corridor half-width enclosing both CDFs.

    Bisection to absolute tolerance LEVY_TOL; the feasibility check samples
    both knot sets (shifted by the candidate width) so step discontinuities
    are probed on both sides.
    """
    if _levy_feasible(mu, nu, 0.0, _levy_eval_points(mu, nu, 0.0)):
        return 0.0
    lo, hi = 0.0, 1.0
    while hi - lo > LEVY_TOL:
        mid = 0.5 * (lo + hi)
        if _levy_feasible(mu, nu, mid, _levy_eval_points(mu, nu, mid)):
            hi = mid
        else:
            lo = mid
    return hi


_METRICS = {"levy": levy, "wasserstein1": wasserstein1}


def sup_distance(p: MeasurePath, q: MeasurePath, metric: str = "wasserstein1") -> float:
    """Largest node-wise distance between two paths on the same time grid."""
    if metric not in _METRICS:
        raise ValueError(f"metric must be one of {sorted(_METRICS)}, got {metric!r}")
    if len(p.times) != len(q.times) or not np.array_equal(p.times, q.times):
        raise GridMismatchError("measure paths must share an identical time grid")
    dist = _METRICS[metric]
    return max(dist(a, b) for a, b in zip(p.measures, q.measures))


def market_weights(positions) -> np.ndarray:
    """Positions normalized by their total; requires a strictly positive total."""
    pos = np.asarray(positions, dtype=float)
    if pos.ndim != 1 or len(pos) == 0:
        raise ValueError("need a nonempty 1-D position vector")
    if np.any(pos < 0):
        raise ValueError("positions must be nonnegative")
    total = pos.sum()
    if total == 0:
        raise ValueError("all positions are zero; weights are undefined")
    return pos / total


def ranked_vs_limit(positions, ll: LimitLaw, t: float) -> np.ndarray:
    """Compare ranked positions with the limit quantiles at plotting points.

    Returns an (N, 4) array with columns (rank k, k-th smallest position,
    quantile at k/(N+1), absolute gap).  The k/(N+1) plotting positions
    avoid the p = 1 endpoint.
    """
    pos = np.sort(np.asarray(positions, dtype=float))
    n = len(pos)
    if n == 0:
        raise ValueError("need a nonempty position vector")
    ranks = np.arange(1, n + 1)
    q = quantile(ll, t, ranks / (n + 1.0))
    return np.column_stack([ranks.astype(float), pos, q, np.abs(pos - q)])


def measure_to_csv(m: Measure1D, path) -> None:
    """Write (location, weight) rows for atoms or (x, density) for grids."""
    header = ["location", "weight"] if m.kind == Measure1D.ATOMS else ["x", "density"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for xv, wv in zip(m.x, m.w):
            writer.writerow([repr(float(xv)), repr(float(wv))])

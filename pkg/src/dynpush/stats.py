"""Run aggregation, sample-based dominance checks, bounded-degree predicate, scaling fits."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import stats as sps

from .dyngraph import GraphSnapshot, stationary_probability


class NotApplicable(Exception):
    """A check whose preconditions do not hold; callers skip it."""


class InsufficientData(ValueError):
    pass


def phat(n: int, p: float) -> float:
    return min(p, 1.0 / n)


# --------------------------------------------------------------------------
# Bounded-degree states


def edge_boundary_count(g: GraphSnapshot, informed) -> int:
    """Edges with at least one endpoint in ``informed``."""
    from .protocol import as_mask

    mask = as_mask(informed, g.n)
    u, v = g.endpoints
    return int(np.count_nonzero(mask[u] | mask[v]))


def bounded_degree_ratio(g: GraphSnapshot, informed, p: float, q: float) -> float:
    """|E(I)| / ((8/q) n p~ |I|); the state is bounded-degree iff this is <= 1."""
    from .protocol import as_mask

    if q <= 0:
        raise NotApplicable("bounded-degree predicate needs q > 0")
    mask = as_mask(informed, g.n)
    count = edge_boundary_count(g, mask)
    if count == 0:
        return 0.0
    bound = (8.0 / q) * g.n * stationary_probability(p, q) * int(mask.sum())
    return count / bound if bound > 0 else math.inf


def bounded_degree_check(g: GraphSnapshot, informed, p: float, q: float) -> bool:
    return bounded_degree_ratio(g, informed, p, q) <= 1.0


@dataclass
class BoundedDegreeReport:
    rounds_checked: int
    violations: int
    max_ratio: float


def bounded_degree_report(records) -> BoundedDegreeReport:
    checked = sum(r.bd_rounds_checked or 0 for r in records)
    viol = sum(r.bd_violations or 0 for r in records)
    ratios = [r.bd_max_ratio for r in records if r.bd_max_ratio is not None]
    return BoundedDegreeReport(checked, viol, max(ratios, default=0.0))


# --------------------------------------------------------------------------
# Summaries


@dataclass
class SummaryStats:
    count: int
    mean: float
    median: float
    q05: float
    q95: float
    timeout_fraction: float
    median_ci: tuple[float, float]

    def to_dict(self) -> dict:
        return {
            "count": self.count,
            "mean": self.mean,
            "median": self.median,
            "q05": self.q05,
            "q95": self.q95,
            "timeout_fraction": self.timeout_fraction,
            "median_ci": list(self.median_ci),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SummaryStats":
        d = dict(d)
        d["median_ci"] = tuple(d["median_ci"])
        return cls(**d)


def median_ci(sorted_values: np.ndarray, level: float = 0.99) -> tuple[float, float]:
    """Distribution-free CI for the median from binomial order statistics.

    Uses the order statistics x_(l), x_(N+1-l) (1-based) with l the largest
    index such that Pr[Bin(N, 1/2) <= l - 1] <= (1 - level)/2; clamps to the
    sample range when N is too small for the requested level.
    """
    n = len(sorted_values)
    if n == 0:
        return (math.nan, math.nan)
    tail = (1.0 - level) / 2
    l = int(sps.binom.ppf(tail, n, 0.5))
    if sps.binom.cdf(l - 1, n, 0.5) > tail:
        l -= 1
    l = max(l, 1)
    u = max(n + 1 - l, l)
    return float(sorted_values[l - 1]), float(sorted_values[u - 1])


def summarize_values(values: Sequence[float], timeouts: int = 0) -> SummaryStats:
    """Type-7 quantiles (linear interpolation) over completed runs."""
    x = np.sort(np.asarray(values, dtype=float))
    total = x.size + timeouts
    if total == 0:
        raise InsufficientData("nothing to summarize")
    tf = timeouts / total
    if x.size == 0:
        nan = math.nan
        return SummaryStats(0, nan, nan, nan, nan, tf, (nan, nan))
    q05, med, q95 = np.quantile(x, [0.05, 0.5, 0.95])
    return SummaryStats(int(x.size), float(x.mean()), float(med), float(q05), float(q95), tf, median_ci(x))


def summarize(records) -> SummaryStats:
    records = list(records)
    if not records:
        raise InsufficientData("summarize needs at least one record")
    done = [r.completion_round for r in records if r.completion_round is not None]
    return summarize_values(done, timeouts=len(records) - len(done))


# --------------------------------------------------------------------------
# Sample-based dominance


@dataclass
class DominanceVerdict:
    status: str  # "dominates" | "violated" | "inconclusive"
    worst_h: float | None
    worst_gap: float
    band: float

    def __bool__(self):
        return self.status == "dominates"


def dkw_halfwidth(n: int, alpha: float = 0.01) -> float:
    return math.sqrt(math.log(2.0 / alpha) / (2.0 * n))


def _ecdf(sorted_x: np.ndarray, at: np.ndarray) -> np.ndarray:
    return np.searchsorted(sorted_x, at, side="right") / sorted_x.size


def empirical_dominance_test(samples_lo, samples_hi, delta: float = 0.0, alpha: float = 0.01) -> DominanceVerdict:
    """Sample check that Pr[lo <= h] <= Pr[hi <= h] for every h.

    ``lo`` is the stochastically larger variable (its CDF is the lower one).
    Verdicts: "violated" when some gap ECDF_lo - ECDF_hi exceeds both DKW
    half-widths plus ``delta``; "dominates" when no gap exceeds ``delta``;
    otherwise "inconclusive".
    """
    lo = np.sort(np.asarray(samples_lo, dtype=float))
    hi = np.sort(np.asarray(samples_hi, dtype=float))
    if lo.size == 0 or hi.size == 0:
        raise InsufficientData("both sample sets must be non-empty")
    grid = np.union1d(lo, hi)
    gap = _ecdf(lo, grid) - _ecdf(hi, grid)
    i = int(np.argmax(gap))
    worst = float(gap[i])
    band = dkw_halfwidth(lo.size, alpha) + dkw_halfwidth(hi.size, alpha)
    if worst > band + delta:
        status = "violated"
    elif worst <= delta:
        status = "dominates"
    else:
        status = "inconclusive"
    return DominanceVerdict(status, float(grid[i]), worst, band)


# --------------------------------------------------------------------------
# Scaling fits


@dataclass
class ScalingFit:
    predictor: str
    slope: float
    intercept: float
    r2: float
    ratios: list[tuple[float, float]] = field(default_factory=list)  # (n, t / predictor(n))
    slope_stderr: float = math.nan

    @property
    def ratio_spread(self) -> float:
        r = [x for _, x in self.ratios]
        return max(r) / min(r)


def fit_scaling(points, predictor: Callable[[float], float], name: str = "") -> ScalingFit:
    """Least squares of t_median = slope * predictor(n) + intercept."""
    pts = list(points)
    if len(pts) < 4:
        raise InsufficientData(f"need at least 4 points, got {len(pts)}")
    n = np.array([p[0] for p in pts], dtype=float)
    t = np.array([p[1] for p in pts], dtype=float)
    x = np.array([predictor(v) for v in n], dtype=float)
    if np.any(x <= 0):
        raise ValueError("predictor must be positive")
    xm, tm = x.mean(), t.mean()
    sxx = float(((x - xm) ** 2).sum())
    if sxx == 0:
        raise InsufficientData("predictor is constant over the points")
    slope = float(((x - xm) * (t - tm)).sum() / sxx)
    intercept = float(tm - slope * xm)
    resid = t - (slope * x + intercept)
    ss_res = float((resid**2).sum())
    ss_tot = float(((t - tm) ** 2).sum())
    if ss_tot == 0:
        r2 = 1.0
    else:
        r2 = min(1.0, max(0.0, 1.0 - ss_res / ss_tot))
    dof = len(pts) - 2
    stderr = math.sqrt(ss_res / dof / sxx) if dof > 0 else math.nan
    ratios = [(float(a), float(b / c)) for a, b, c in zip(n, t, x)]
    return ScalingFit(name or getattr(predictor, "__name__", "predictor"), slope, intercept, r2, ratios, stderr)


def log_n(n: float) -> float:
    return math.log(n)


def log2_n(n: float) -> float:
    return math.log2(n)


def log_n_over_nphat(p_of_n: Callable[[float], float]) -> Callable[[float], float]:
    """Predictor ln n / (n * phat(n, p(n)))."""

    def predictor(n: float) -> float:
        return math.log(n) / (n * phat(int(n), p_of_n(n)))

    predictor.__name__ = "log_n_over_nphat"
    return predictor

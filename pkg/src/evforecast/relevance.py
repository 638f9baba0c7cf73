"""Relevance scoring of scaled observations and windowed samples.

A relevance function maps a scaled value to [0, 1] (1 = most extreme). It is
a monotonicity-preserving piecewise cubic Hermite interpolant built from
(value, relevance) control points, which by default come from boxplot
statistics: the median anchors relevance 0 and the adjacent value
(quartile +/- whisker * IQR, clipped to the observed range) anchors
relevance 1. Outside the knot range the function extends as a constant.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .embedding import WindowDataset
from .series import TimeSeries

AGGREGATORS = ("max", "min", "avg", "first")

TAILS = ("upper", "lower", "both")


@dataclass(frozen=True)
class ControlPoints:
    """Ordered (value, relevance) pairs; values strictly increasing, relevances in [0, 1]."""

    values: np.ndarray
    relevances: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        r = np.asarray(self.relevances, dtype=float)
        if v.ndim != 1 or v.shape != r.shape or v.size < 2:
            raise ValueError("control points need >= 2 aligned (value, relevance) pairs")
        if np.any(np.diff(v) <= 0):
            raise ValueError("control point values must be strictly increasing")
        if np.any((r < 0) | (r > 1)):
            raise ValueError("relevances must lie in [0, 1]")
        v.setflags(write=False)
        r.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "relevances", r)

    @classmethod
    def from_pairs(cls, pairs) -> "ControlPoints":
        pairs = sorted((float(v), float(r)) for v, r in pairs)
        return cls(np.array([p[0] for p in pairs]), np.array([p[1] for p in pairs]))


def boxplot_control_points(ts: TimeSeries, tail: str = "upper", whisker: float = 1.5) -> ControlPoints:
    """Control points from boxplot statistics of a scaled series.

    upper: (median, 0) and (min(Q3 + whisker*IQR, max), 1)
    lower: (max(Q1 - whisker*IQR, min), 1) and (median, 0)
    both:  union of the two.

    Percentiles use the linear interpolation convention between closest ranks.
    """
    if tail not in TAILS:
        raise ValueError(f"tail must be one of {TAILS}")
    v = ts.values[~np.isnan(ts.values)]
    if np.unique(v).size < 4:
        raise ValueError("boxplot relevance needs at least 4 distinct values")
    q1, med, q3 = np.percentile(v, [25, 50, 75])
    iqr = q3 - q1
    hi = min(q3 + whisker * iqr, float(np.max(v)))
    lo = max(q1 - whisker * iqr, float(np.min(v)))
    if tail in ("upper", "both") and not hi > med:
        raise ValueError(f"degenerate statistics: upper adjacent value {hi} <= median {med}")
    if tail in ("lower", "both") and not lo < med:
        raise ValueError(f"degenerate statistics: lower adjacent value {lo} >= median {med}")
    if tail == "upper":
        return ControlPoints(np.array([med, hi]), np.array([0.0, 1.0]))
    if tail == "lower":
        return ControlPoints(np.array([lo, med]), np.array([1.0, 0.0]))
    return ControlPoints(np.array([lo, med, hi]), np.array([1.0, 0.0, 1.0]))


def _edge_slope(h0, h1, d0, d1):
    # one-sided three-point end slope, shape-limited (Moler, pchip)
    d = ((2 * h0 + h1) * d0 - h0 * d1) / (h0 + h1)
    if np.sign(d) != np.sign(d0):
        return 0.0
    if np.sign(d0) != np.sign(d1) and abs(d) > 3 * abs(d0):
        return 3 * d0
    return d


def _pchip_slopes(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Monotonicity-preserving Hermite slopes (Fritsch-Carlson limiting via
    the weighted harmonic mean of adjacent secants)."""
    h = np.diff(x)
    delta = np.diff(y) / h
    n = x.size
    if n == 2:
        return np.array([delta[0], delta[0]])
    m = np.zeros(n)
    for k in range(1, n - 1):
        d0, d1 = delta[k - 1], delta[k]
        if d0 == 0.0 or d1 == 0.0 or np.sign(d0) != np.sign(d1):
            m[k] = 0.0
        else:
            w1 = 2 * h[k] + h[k - 1]
            w2 = h[k] + 2 * h[k - 1]
            m[k] = (w1 + w2) / (w1 / d0 + w2 / d1)
    m[0] = _edge_slope(h[0], h[1], delta[0], delta[1])
    m[-1] = _edge_slope(h[-1], h[-2], delta[-1], delta[-2])
    return m


@dataclass(frozen=True)
class RelevanceFunction:
    """Callable piecewise cubic Hermite interpolant with constant tails,
    clamped to [0, 1]."""

    knots: ControlPoints
    slopes: np.ndarray

    def __call__(self, x):
        xs, ys, ms = self.knots.values, self.knots.relevances, self.slopes
        x = np.asarray(x, dtype=float)
        scalar = x.ndim == 0
        xf = np.atleast_1d(x)
        seg = np.clip(np.searchsorted(xs, xf, side="right") - 1, 0, xs.size - 2)
        h = xs[seg + 1] - xs[seg]
        t = (xf - xs[seg]) / h
        t2, t3 = t * t, t * t * t
        val = (
            ys[seg] * (2 * t3 - 3 * t2 + 1)
            + h * ms[seg] * (t3 - 2 * t2 + t)
            + ys[seg + 1] * (-2 * t3 + 3 * t2)
            + h * ms[seg + 1] * (t3 - t2)
        )
        val = np.where(xf <= xs[0], ys[0], np.where(xf >= xs[-1], ys[-1], val))
        val = np.clip(val, 0.0, 1.0)
        return float(val[0]) if scalar else val.reshape(x.shape)


def build_pchip(cp: ControlPoints) -> RelevanceFunction:
    """Interpolate control points into a relevance function."""
    return RelevanceFunction(cp, _pchip_slopes(cp.values, cp.relevances))


def eval_relevance(f: RelevanceFunction, x) -> float:
    return f(x)


def window_relevance(f: RelevanceFunction, y: np.ndarray, agg: str = "max") -> float:
    """Aggregate per-step relevances of a target window into one score."""
    y = np.asarray(y, dtype=float)
    if y.size == 0:
        raise ValueError("cannot score an empty target window")
    r = f(y)
    if agg == "max":
        return float(np.max(r))
    if agg == "min":
        return float(np.min(r))
    if agg == "avg":
        return float(np.mean(r))
    if agg == "first":
        return float(np.ravel(r)[0])
    raise ValueError(f"aggregator must be one of {AGGREGATORS}")


def score_dataset(ds: WindowDataset, f: RelevanceFunction, agg: str = "max") -> np.ndarray:
    """Vectorised window_relevance over every pair in a dataset."""
    if agg not in AGGREGATORS:
        raise ValueError(f"aggregator must be one of {AGGREGATORS}")
    r = f(ds.Y)
    if agg == "max":
        return r.max(axis=1)
    if agg == "min":
        return r.min(axis=1)
    if agg == "avg":
        return r.mean(axis=1)
    return r[:, 0]


@dataclass
class Partition:
    """Extreme/common split of a dataset at a relevance threshold.

    Scores at exactly the threshold count as extreme.
    """

    extremes: WindowDataset
    commons: WindowDataset
    threshold: float
    scores: np.ndarray

    @property
    def extreme_fraction(self) -> float:
        total = len(self.extremes) + len(self.commons)
        return len(self.extremes) / total if total else 0.0


def partition(ds: WindowDataset, f: RelevanceFunction, threshold: float, agg: str = "max") -> Partition:
    """Split a dataset into extremes (aggregated relevance >= threshold) and commons."""
    if not 0.0 <= threshold <= 1.0:
        raise ValueError("threshold must lie in [0, 1]")
    scores = score_dataset(ds, f, agg)
    mask = scores >= threshold
    return Partition(ds.take(np.flatnonzero(mask)), ds.take(np.flatnonzero(~mask)), threshold, scores)


def threshold_to_value(f: RelevanceFunction, threshold: float, tail: str = "upper", tol: float = 1e-10) -> float:
    """Invert the relevance function on one monotone tail.

    Returns the smallest (upper) or largest (lower) scaled value whose
    relevance reaches the threshold, by bisection to ``tol``.
    """
    xs, rs = f.knots.values, f.knots.relevances
    if tail == "upper":
        start = rs.size - 1 - int(np.argmin(rs[::-1]))
        branch_x, branch_r = xs[start:], rs[start:]
        if np.any(np.diff(branch_r) < 0):
            raise ValueError("relevance is not monotone on the upper tail")
    elif tail == "lower":
        stop = int(np.argmin(rs))
        branch_x, branch_r = xs[: stop + 1], rs[: stop + 1]
        if np.any(np.diff(branch_r) > 0):
            raise ValueError("relevance is not monotone on the lower tail")
    else:
        raise ValueError("tail must be 'upper' or 'lower'")
    hi_r = float(np.max(branch_r))
    if threshold > hi_r:
        raise ValueError(f"relevance {threshold} is not attained on the {tail} tail (max {hi_r})")
    if branch_x.size == 1:
        return float(branch_x[0])
    if tail == "upper":
        a, b = float(branch_x[0]), float(branch_x[-1])
        if f(a) >= threshold:
            return a
        while b - a > tol:
            mid = 0.5 * (a + b)
            if f(mid) >= threshold:
                b = mid
            else:
                a = mid
        return b
    a, b = float(branch_x[0]), float(branch_x[-1])
    if f(b) >= threshold:
        return b
    while b - a > tol:
        mid = 0.5 * (a + b)
        if f(mid) >= threshold:
            a = mid
        else:
            b = mid
    return a


def write_partition_csv(part: Partition, ds: WindowDataset, path) -> None:
    """Export per-pair origin, relevance score and extreme/common class."""
    extreme_origins = set(int(o) for o in part.extremes.origins)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["origin", "score", "class"])
        for origin, score in zip(ds.origins, part.scores):
            label = "extreme" if int(origin) in extreme_origins else "common"
            writer.writerow([int(origin), repr(float(score)), label])

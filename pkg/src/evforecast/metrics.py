"""Forecast accuracy overall and at the tails.

RMSE treats every entry alike; the squared-error-over-extremes family
restricts it to relevant samples, either by a relevance threshold or by the
top p% most relevant share of the evaluation set. Sample relevance is the
max per-step relevance of the TRUE target window, so predictions never
influence subset selection.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

PERCENTILES = (1.0, 2.0, 5.0, 10.0, 25.0, 50.0, 75.0)


class UndefinedMetricError(ValueError):
    """The requested subset is empty; the metric is undefined, not zero."""


@dataclass(frozen=True)
class EvalFrame:
    """Row-aligned truths (n, P), predictions (n, P), per-sample relevance
    scores and origins."""

    truths: np.ndarray
    predictions: np.ndarray
    scores: np.ndarray
    origins: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.truths, dtype=float)
        p = np.asarray(self.predictions, dtype=float)
        s = np.asarray(self.scores, dtype=float)
        o = np.asarray(self.origins, dtype=int)
        if t.ndim != 2 or t.shape != p.shape or s.shape != (t.shape[0],) or o.shape != s.shape:
            raise ValueError("truths/predictions/scores/origins must be row-aligned")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(p)) and np.all(np.isfinite(s))):
            raise ValueError("evaluation frames must be finite")
        object.__setattr__(self, "truths", t)
        object.__setattr__(self, "predictions", p)
        object.__setattr__(self, "scores", s)
        object.__setattr__(self, "origins", o)

    def __len__(self) -> int:
        return self.truths.shape[0]

    @property
    def horizon(self) -> int:
        return self.truths.shape[1]


def _rmse_rows(frame: EvalFrame, rows: np.ndarray, step: int | None = None) -> float:
    t = frame.truths[rows]
    p = frame.predictions[rows]
    if step is not None:
        t = t[:, step - 1:step]
        p = p[:, step - 1:step]
    diff = t - p
    return float(np.sqrt(np.mean(diff * diff)))


def rmse(frame: EvalFrame, step: int | None = None) -> float:
    """Root mean squared error over all n*P entries (or one horizon step)."""
    if len(frame) == 0:
        raise UndefinedMetricError("empty evaluation frame")
    if step is not None and not 1 <= step <= frame.horizon:
        raise ValueError(f"step {step} outside horizon 1..{frame.horizon}")
    return _rmse_rows(frame, np.arange(len(frame)), step)


def _threshold_rows(frame: EvalFrame, threshold: float) -> np.ndarray:
    rows = np.flatnonzero(frame.scores >= threshold)
    if rows.size == 0:
        raise UndefinedMetricError(
            f"no sample reaches relevance {threshold}; threshold SER is undefined"
        )
    return rows


def ser_threshold(frame: EvalFrame, threshold: float, step: int | None = None) -> float:
    """RMSE restricted to samples whose relevance reaches the threshold."""
    return _rmse_rows(frame, _threshold_rows(frame, threshold), step)


def ser_threshold_sum(frame: EvalFrame, threshold: float) -> float:
    """Raw squared-error sum over the threshold subset (unnormalised form)."""
    rows = _threshold_rows(frame, threshold)
    diff = frame.truths[rows] - frame.predictions[rows]
    return float(np.sum(diff * diff))


def _percentile_rows(frame: EvalFrame, p: float) -> np.ndarray:
    if not 0.0 < p <= 100.0:
        raise ValueError("p must lie in (0, 100]")
    n = len(frame)
    k = int(np.ceil(p / 100.0 * n))
    # most relevant first; ties to the higher truth mean, then the lower origin
    order = np.lexsort((frame.origins, -frame.truths.mean(axis=1), -frame.scores))
    return np.sort(order[:k])


def ser_percentile(frame: EvalFrame, p: float, step: int | None = None) -> float:
    """RMSE over the ceil(p% * n) most relevant samples."""
    if len(frame) == 0:
        raise UndefinedMetricError("empty evaluation frame")
    return _rmse_rows(frame, _percentile_rows(frame, p), step)


def per_step(frame: EvalFrame, metric: str, step: int, p: float = 5.0,
             threshold: float = 0.0) -> float:
    """One-horizon-step slice of rmse / ser_percentile / ser_threshold."""
    if not 1 <= step <= frame.horizon:
        raise ValueError(f"step {step} outside horizon 1..{frame.horizon}")
    if metric == "rmse":
        return rmse(frame, step)
    if metric == "ser_p":
        return ser_percentile(frame, p, step)
    if metric == "ser_rt":
        return ser_threshold(frame, threshold, step)
    raise ValueError("metric must be rmse, ser_p or ser_rt")


@dataclass
class MetricReport:
    """One evaluation pass: aggregate, tail and per-step error figures."""

    rmse: float
    ser_rt: float
    ser_rt_sum: float
    ser_percentiles: dict = field(default_factory=dict)
    per_step_rmse: list = field(default_factory=list)
    per_step_ser5: list = field(default_factory=list)


def compute_report(frame: EvalFrame, threshold: float) -> MetricReport:
    """Evaluate every reported metric on one frame; undefined values are NaN."""
    try:
        ser_rt = ser_threshold(frame, threshold)
        ser_rt_sum = ser_threshold_sum(frame, threshold)
    except UndefinedMetricError:
        ser_rt = float("nan")
        ser_rt_sum = float("nan")
    return MetricReport(
        rmse=rmse(frame),
        ser_rt=ser_rt,
        ser_rt_sum=ser_rt_sum,
        ser_percentiles={p: ser_percentile(frame, p) for p in PERCENTILES},
        per_step_rmse=[rmse(frame, step=s) for s in range(1, frame.horizon + 1)],
        per_step_ser5=[ser_percentile(frame, 5.0, step=s) for s in range(1, frame.horizon + 1)],
    )


def report_columns(horizon: int, prefix: str = "") -> list[str]:
    """CSV column names for one report, in serialization order."""
    cols = [f"{prefix}rmse", f"{prefix}ser_rt", f"{prefix}ser_rt_sum"]
    cols += [f"{prefix}ser_{int(p)}" for p in PERCENTILES]
    cols += [f"{prefix}ser5_step{s}" for s in range(1, horizon + 1)]
    return cols


def report_values(report: MetricReport) -> list[float]:
    vals = [report.rmse, report.ser_rt, report.ser_rt_sum]
    vals += [report.ser_percentiles[p] for p in PERCENTILES]
    vals += list(report.per_step_ser5)
    return vals

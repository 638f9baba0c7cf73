"""Request/response models for the forecasting service.

File paths in requests are resolved on the service host; the CLI runs the
app in-process by default, so paths behave like local ones.
"""

from __future__ import annotations

from pydantic import BaseModel

from ..experiment import ExperimentConfig, StrategySpec, TrainSpec

__all__ = ["ExperimentConfig", "StrategySpec", "TrainSpec"]


class ServiceInfo(BaseModel):
    name: str
    version: str


class SeriesSummary(BaseModel):
    name: str
    n: int
    vmin: float
    vmax: float
    output: str


class IngestRequest(BaseModel):
    path: str
    column: str | int = 0
    output: str
    scale: bool = True


class LorenzRequest(BaseModel):
    n: int = 2000
    dt: float = 0.02
    initial: tuple[float, float, float] = (1.0, 1.0, 1.0)
    seed: int | None = None
    transient: int = 1000
    name: str = "lorenz"
    output: str


class SineRequest(BaseModel):
    n: int = 500
    period: float = 50.0
    amplitude: float = 1.0
    noise_sd: float = 0.0
    seed: int = 0
    name: str = "sine"
    output: str


class SeriesSource(BaseModel):
    """A CSV column, optionally cleaned and min-max scaled before use."""

    path: str
    column: str | int = 0
    scale: bool = True


class RelevanceRequest(BaseModel):
    series: SeriesSource
    tail: str = "upper"
    whisker: float = 1.5
    control_points: list[tuple[float, float]] | None = None
    thresholds: list[float] = [0.7, 0.8, 0.9]
    grid_points: int = 201
    output_dir: str | None = None


class ThresholdValue(BaseModel):
    relevance: float
    value: float | None
    error: str = ""


class RelevanceResponse(BaseModel):
    control_points: list[tuple[float, float]]
    thresholds: list[ThresholdValue]
    files: list[str]


class ResampleRequest(BaseModel):
    series: SeriesSource
    window: int = 5
    horizon: int = 5
    train_fraction: float | None = None
    tail: str = "upper"
    whisker: float = 1.5
    aggregator: str = "max"
    threshold: float = 0.7
    strategy: StrategySpec = StrategySpec(kind="smoter")
    seed: int = 0
    output: str
    partition_output: str | None = None


class ResampleResponse(BaseModel):
    n_extremes: int
    n_commons: int
    n_synthetic: int
    n_total: int
    output: str
    partition_output: str | None = None


class TrainRequest(BaseModel):
    series: SeriesSource
    window: int = 5
    horizon: int = 5
    train_fraction: float = 0.7
    tail: str = "upper"
    whisker: float = 1.5
    aggregator: str = "max"
    threshold: float = 0.7
    strategy: StrategySpec = StrategySpec(kind="none")
    model: str = "bdlstm"
    train: TrainSpec = TrainSpec()
    seed: int = 0
    model_output: str


class TrainResponse(BaseModel):
    model_path: str
    n_train_windows: int
    final_loss: float | None


class EvaluateRequest(BaseModel):
    model_path: str
    series: SeriesSource
    window: int = 5
    horizon: int = 5
    train_fraction: float = 0.7
    split: str = "test"  # train | test | full
    tail: str = "upper"
    whisker: float = 1.5
    threshold: float = 0.7


class MetricReportModel(BaseModel):
    rmse: float
    ser_rt: float | None
    ser_rt_sum: float | None
    ser_percentiles: dict[str, float]
    per_step_rmse: list[float]
    per_step_ser5: list[float]


class EvaluateResponse(BaseModel):
    split: str
    n_windows: int
    report: MetricReportModel


class ExperimentRequest(BaseModel):
    config: ExperimentConfig


class ExperimentResponse(BaseModel):
    cells: int
    new_cells: int
    records_path: str
    summary_path: str
    per_step_path: str


class ReportRequest(BaseModel):
    records: str
    output: str | None = None


class ReportResponse(BaseModel):
    rows: int
    output: str | None

"""Config-driven experiment grid: dataset x strategy x threshold x model x repeat.

Every cell runs the full pipeline (clean, scale, split, embed, partition,
resample, train, evaluate) under an RNG derived from the cell fingerprint,
so results do not depend on execution order. Records append to
``records.csv`` as cells finish; rerunning with the same config skips cells
whose fingerprints are already on disk. ``summary.csv`` aggregates repeats
and ``per_step.csv`` holds the per-horizon-step figures.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from threading import Lock

import numpy as np
from pydantic import BaseModel, Field, field_validator

from . import gan as gan_mod
from . import neuralnet as nn
from .embedding import WindowDataset, embed
from .generators import gen_lorenz, gen_sine
from .metrics import (
    EvalFrame,
    MetricReport,
    compute_report,
    report_columns,
    report_values,
)
from .relevance import (
    ControlPoints,
    RelevanceFunction,
    boxplot_control_points,
    build_pchip,
    partition,
    score_dataset,
)
from .resampling import ResampleStrategy, resample
from .series import TimeSeries, apply_scaler, drop_missing, fit_scaler, load_csv, split

MODELS = ("ridge", "lstm", "bdlstm")


class DatasetSpec(BaseModel):
    """One input series: a CSV column or a synthetic generator."""

    name: str
    kind: str = "csv"  # csv | lorenz | sine
    path: str | None = None
    column: str | int = 0
    n: int = 2000
    dt: float = 0.02
    initial: tuple[float, float, float] = (1.0, 1.0, 1.0)
    period: float = 50.0
    amplitude: float = 1.0
    noise_sd: float = 0.0
    seed: int | None = None

    @field_validator("kind")
    @classmethod
    def _kind(cls, v):
        if v not in ("csv", "lorenz", "sine"):
            raise ValueError("dataset kind must be csv, lorenz or sine")
        return v

    def load(self) -> TimeSeries:
        if self.kind == "csv":
            if not self.path:
                raise ValueError(f"dataset {self.name}: csv kind requires a path")
            ts = load_csv(self.path, self.column)
        elif self.kind == "lorenz":
            ts = gen_lorenz(self.n, self.dt, self.initial, self.seed, name=self.name)
        else:
            ts = gen_sine(self.n, self.period, self.amplitude, self.noise_sd,
                          self.seed or 0, name=self.name)
        return TimeSeries(ts.values, ts.index, self.name)


class StrategySpec(BaseModel):
    """Augmentation policy; over_ratio None balances extremes against kept commons."""

    kind: str = "none"
    k_neighbors: int = 5
    over_ratio: float | None = 2.0
    under_fraction: float = 1.0
    gan_epochs: int = 200
    gan_batch: int = 32
    gan_latent: int = 32

    @field_validator("kind")
    @classmethod
    def _kind(cls, v):
        if v not in ("none", "replicate", "smoter", "smoter-bin", "gan"):
            raise ValueError(f"unknown strategy kind {v!r}")
        return v

    def label(self) -> str:
        return self.kind

    def to_strategy(self, seed: int) -> ResampleStrategy:
        return ResampleStrategy(self.kind, self.k_neighbors, self.over_ratio,
                                self.under_fraction, int(seed))


class TrainSpec(BaseModel):
    epochs: int = 100
    batch_size: int = 32
    lr: float = 1e-3
    lstm_hidden: int = 64
    bdlstm_hidden: int = 32
    ridge_lambda: float = 1e-6
    clip_norm: float | None = 5.0


class ExperimentConfig(BaseModel):
    """Declarative description of a full experiment grid."""

    datasets: list[DatasetSpec]
    window: int = 5
    horizon: int = 5
    train_fraction: float = 0.7
    tail: str = "upper"
    aggregator: str = "max"
    scaler_fit: str = "full"  # full | train: fit scope for scaler and relevance
    whisker: float = 1.5
    control_points: list[tuple[float, float]] | None = None
    thresholds: list[float] = Field(default_factory=lambda: [0.7, 0.8, 0.9])
    strategies: list[StrategySpec] = Field(default_factory=lambda: [StrategySpec()])
    models: list[str] = Field(default_factory=lambda: ["bdlstm"])
    repeats: int = 10
    base_seed: int = 42
    output_dir: str = "runs"
    workers: int = 1
    train: TrainSpec = Field(default_factory=TrainSpec)

    @field_validator("datasets", "strategies", "models", "thresholds")
    @classmethod
    def _nonempty(cls, v):
        if not v:
            raise ValueError("datasets, strategies, models and thresholds must be non-empty")
        return v

    @field_validator("models")
    @classmethod
    def _models(cls, v):
        for m in v:
            if m not in MODELS:
                raise ValueError(f"model must be one of {MODELS}, got {m!r}")
        return v

    @field_validator("thresholds")
    @classmethod
    def _thresholds(cls, v):
        if any(not 0.0 <= t <= 1.0 for t in v):
            raise ValueError("thresholds must lie in [0, 1]")
        return v

    @field_validator("repeats")
    @classmethod
    def _repeats(cls, v):
        if v < 1:
            raise ValueError("repeats must be >= 1")
        return v

    @field_validator("scaler_fit")
    @classmethod
    def _scaler_fit(cls, v):
        if v not in ("full", "train"):
            raise ValueError("scaler_fit must be 'full' or 'train'")
        return v


@dataclass
class PreparedDataset:
    """Scaled, split and embedded series plus its relevance function."""

    name: str
    train_windows: WindowDataset
    test_windows: WindowDataset
    relevance: RelevanceFunction


@dataclass
class RunRecord:
    fingerprint: str
    dataset: str
    strategy: str
    threshold: float
    model: str
    repeat: int
    seed: int
    status: str
    error: str
    wall_time: float
    train_report: MetricReport | None
    test_report: MetricReport | None


def prepare_dataset(spec: DatasetSpec, cfg: ExperimentConfig) -> PreparedDataset:
    ts = drop_missing(spec.load())
    train_raw, _ = split(ts, cfg.train_fraction)
    scaler = fit_scaler(train_raw if cfg.scaler_fit == "train" else ts)
    scaled = apply_scaler(scaler, ts)
    train_ts, test_ts = split(scaled, cfg.train_fraction)
    if cfg.control_points:
        cp = ControlPoints.from_pairs(cfg.control_points)
    else:
        fit_ts = train_ts if cfg.scaler_fit == "train" else scaled
        cp = boxplot_control_points(fit_ts, cfg.tail, cfg.whisker)
    return PreparedDataset(
        name=spec.name,
        train_windows=embed(train_ts, cfg.window, cfg.horizon),
        test_windows=embed(test_ts, cfg.window, cfg.horizon),
        relevance=build_pchip(cp),
    )


def cell_fingerprint(cfg: ExperimentConfig, dataset: DatasetSpec, strategy: StrategySpec,
                     threshold: float, model: str, repeat: int) -> str:
    payload = {
        "dataset": dataset.model_dump(),
        "strategy": strategy.model_dump(),
        "threshold": threshold,
        "model": model,
        "repeat": repeat,
        "window": cfg.window,
        "horizon": cfg.horizon,
        "train_fraction": cfg.train_fraction,
        "tail": cfg.tail,
        "aggregator": cfg.aggregator,
        "scaler_fit": cfg.scaler_fit,
        "whisker": cfg.whisker,
        "control_points": cfg.control_points,
        "base_seed": cfg.base_seed,
        "train": cfg.train.model_dump(),
    }
    blob = json.dumps(payload, sort_keys=True, default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _cell_rngs(cfg: ExperimentConfig, fingerprint: str, repeat: int) -> np.ndarray:
    ss = np.random.SeedSequence([cfg.base_seed + repeat, int(fingerprint, 16)])
    return ss.generate_state(4)


def _build_training_set(prepared: PreparedDataset, cfg: ExperimentConfig,
                        strategy: StrategySpec, threshold: float, seed: int) -> WindowDataset:
    if strategy.kind == "none":
        return prepared.train_windows
    part = partition(prepared.train_windows, prepared.relevance, threshold, cfg.aggregator)
    strat = strategy.to_strategy(seed)
    if strategy.kind == "gan":
        gan_cfg = gan_mod.GanTrainConfig(
            epochs=strategy.gan_epochs, batch_size=strategy.gan_batch,
            latent_dim=strategy.gan_latent, seed=seed,
        )
        out, _ = gan_mod.gan_resample(part, strat, gan_cfg)
        return out
    return resample(part, strat)


def _fit_and_predict(model: str, train_set: WindowDataset, cfg: ExperimentConfig,
                     init_seed: int, train_seed: int):
    spec = cfg.train
    if model == "ridge":
        fitted = nn.ridge_ar_fit(train_set, spec.ridge_lambda)
        return lambda x: nn.ridge_predict(fitted, x)
    rng = np.random.default_rng(int(init_seed))
    if model == "lstm":
        net = nn.build_lstm_forecaster(cfg.window, cfg.horizon, spec.lstm_hidden, rng=rng)
    else:
        net = nn.build_bdlstm_forecaster(cfg.window, cfg.horizon, spec.bdlstm_hidden, rng=rng)
    train_cfg = nn.TrainConfig(spec.epochs, spec.batch_size, spec.lr,
                               int(train_seed), "mse", spec.clip_norm)
    nn.train(net, train_set, train_cfg)
    return lambda x: nn.predict(net, x)


def _evaluate(predictor, windows: WindowDataset, relevance: RelevanceFunction,
              threshold: float) -> MetricReport:
    frame = EvalFrame(
        truths=windows.Y,
        predictions=predictor(windows.X),
        scores=score_dataset(windows, relevance, "max"),
        origins=windows.origins,
    )
    return compute_report(frame, threshold)


def run_cell(prepared: PreparedDataset | Exception, cfg: ExperimentConfig, dataset: DatasetSpec,
             strategy: StrategySpec, threshold: float, model: str, repeat: int) -> RunRecord:
    fingerprint = cell_fingerprint(cfg, dataset, strategy, threshold, model, repeat)
    resample_seed, init_seed, train_seed, _ = _cell_rngs(cfg, fingerprint, repeat)
    started = time.perf_counter()
    try:
        if isinstance(prepared, Exception):
            raise prepared
        train_set = _build_training_set(prepared, cfg, strategy, threshold, int(resample_seed))
        predictor = _fit_and_predict(model, train_set, cfg, init_seed, train_seed)
        train_report = _evaluate(predictor, prepared.train_windows, prepared.relevance, threshold)
        test_report = _evaluate(predictor, prepared.test_windows, prepared.relevance, threshold)
        status, error = "ok", ""
    except Exception as exc:  # noqa: BLE001 - cell failures must not abort the grid
        train_report = test_report = None
        status, error = "error", f"{type(exc).__name__}: {exc}"
    return RunRecord(
        fingerprint=fingerprint,
        dataset=dataset.name,
        strategy=strategy.label(),
        threshold=threshold,
        model=model,
        repeat=repeat,
        seed=cfg.base_seed + repeat,
        status=status,
        error=error,
        wall_time=time.perf_counter() - started,
        train_report=train_report,
        test_report=test_report,
    )


# --- records persistence ------------------------------------------------------

_META_COLS = ["fingerprint", "dataset", "strategy", "threshold", "model",
              "repeat", "seed", "status", "error", "wall_time"]


def _fmt(value: float) -> str:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return ""
    return repr(float(value))


def record_columns(horizon: int) -> list[str]:
    return _META_COLS + report_columns(horizon, "train_") + report_columns(horizon, "test_")


def record_row(rec: RunRecord, horizon: int) -> list[str]:
    row = [rec.fingerprint, rec.dataset, rec.strategy, _fmt(rec.threshold), rec.model,
           str(rec.repeat), str(rec.seed), rec.status, rec.error, repr(rec.wall_time)]
    for report in (rec.train_report, rec.test_report):
        if report is None:
            row += [""] * len(report_columns(horizon))
        else:
            row += [_fmt(v) for v in report_values(report)]
    return row


def read_records(path: Path) -> tuple[list[str], list[dict]]:
    if not path.exists():
        return [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        return list(reader.fieldnames or []), list(reader)


def run_experiment(cfg: ExperimentConfig, progress=None) -> tuple[list[dict], int]:
    """Execute (or resume) the grid; returns (all record rows, newly run count)."""
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    records_path = out_dir / "records.csv"
    columns = record_columns(cfg.horizon)
    existing_cols, existing = read_records(records_path)
    if existing and existing_cols != columns:
        raise ValueError(f"{records_path} has a different schema; use a fresh output dir")
    done = {row["fingerprint"] for row in existing}

    cells = []
    for dataset in cfg.datasets:
        for strategy in cfg.strategies:
            for threshold in cfg.thresholds:
                for model in cfg.models:
                    for repeat in range(cfg.repeats):
                        fp = cell_fingerprint(cfg, dataset, strategy, threshold, model, repeat)
                        if fp not in done:
                            cells.append((dataset, strategy, threshold, model, repeat))

    prepared: dict[str, PreparedDataset | Exception] = {}
    if cells:
        needed = {cell[0].name for cell in cells}
        for spec in cfg.datasets:
            if spec.name not in needed:
                continue
            try:
                prepared[spec.name] = prepare_dataset(spec, cfg)
            except Exception as exc:  # noqa: BLE001 - bad datasets become error records
                prepared[spec.name] = exc

    lock = Lock()
    new_rows: list[dict] = []

    def _run(cell) -> None:
        dataset, strategy, threshold, model, repeat = cell
        rec = run_cell(prepared[dataset.name], cfg, dataset, strategy, threshold, model, repeat)
        row = record_row(rec, cfg.horizon)
        with lock:
            fresh = not records_path.exists()
            with open(records_path, "a", newline="", encoding="utf-8") as fh:
                writer = csv.writer(fh)
                if fresh:
                    writer.writerow(columns)
                writer.writerow(row)
            new_rows.append(dict(zip(columns, row)))
            if progress:
                progress(rec)

    if cfg.workers > 1 and len(cells) > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            list(pool.map(_run, cells))
    else:
        for cell in cells:
            _run(cell)

    _, all_rows = read_records(records_path)
    write_summary(all_rows, cfg.horizon, out_dir / "summary.csv")
    write_per_step(all_rows, cfg.horizon, out_dir / "per_step.csv")
    return all_rows, len(cells)


# --- aggregation ----------------------------------------------------------------


def _mean_std(values: list[float]) -> tuple[float, float]:
    arr = np.array(values, dtype=float)
    mean = float(np.mean(arr))
    std = 0.0 if arr.size < 2 else float(np.std(arr, ddof=1))
    return mean, std


def aggregate(rows: list[dict], horizon: int) -> list[dict]:
    """Per-cell mean and sample std over repeats, plus best/second/worst flags
    per (dataset, test metric) across the cells of that dataset."""
    metric_cols = report_columns(horizon, "train_") + report_columns(horizon, "test_")
    groups: dict[tuple, list[dict]] = {}
    for row in rows:
        key = (row["dataset"], row["strategy"], row["threshold"], row["model"])
        groups.setdefault(key, []).append(row)

    summary = []
    for key in sorted(groups):
        rows_ok = [r for r in groups[key] if r["status"] == "ok"]
        entry = {
            "dataset": key[0], "strategy": key[1], "threshold": key[2], "model": key[3],
            "repeats": str(len(groups[key])), "failures": str(len(groups[key]) - len(rows_ok)),
        }
        for col in metric_cols:
            vals = [float(r[col]) for r in rows_ok if r.get(col)]
            if vals:
                mean, std = _mean_std(vals)
                entry[f"{col}_mean"] = _fmt(mean)
                entry[f"{col}_std"] = _fmt(std)
            else:
                entry[f"{col}_mean"] = ""
                entry[f"{col}_std"] = ""
        summary.append(entry)

    flag_cols = report_columns(horizon, "test_")
    for dataset in sorted({e["dataset"] for e in summary}):
        members = [e for e in summary if e["dataset"] == dataset]
        for col in flag_cols:
            ranked = sorted(
                (e for e in members if e[f"{col}_mean"]),
                key=lambda e: float(e[f"{col}_mean"]),
            )
            for e in members:
                e[f"{col}_flag"] = ""
            if ranked:
                ranked[0][f"{col}_flag"] = "best"
            if len(ranked) > 1:
                ranked[1][f"{col}_flag"] = "second"
            if len(ranked) > 2:
                ranked[-1][f"{col}_flag"] = "worst"
    return summary


def write_summary(rows: list[dict], horizon: int, path: Path) -> list[dict]:
    summary = aggregate(rows, horizon)
    metric_cols = report_columns(horizon, "train_") + report_columns(horizon, "test_")
    columns = ["dataset", "strategy", "threshold", "model", "repeats", "failures"]
    for col in metric_cols:
        columns += [f"{col}_mean", f"{col}_std"]
    columns += [f"{col}_flag" for col in report_columns(horizon, "test_")]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for entry in summary:
            writer.writerow([entry.get(c, "") for c in columns])
    return summary


def infer_horizon(fieldnames: list[str]) -> int:
    steps = [int(c.rsplit("step", 1)[1]) for c in fieldnames if c.startswith("test_ser5_step")]
    if not steps:
        raise ValueError("records header carries no per-step columns")
    return max(steps)


def write_per_step(rows: list[dict], horizon: int, path: Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["dataset", "strategy", "threshold", "model", "repeat", "seed",
                         "split", "step", "ser_5"])
        for row in sorted(rows, key=lambda r: (r["dataset"], r["strategy"], r["threshold"],
                                               r["model"], int(r["repeat"]))):
            if row["status"] != "ok":
                continue
            for split_name, prefix in (("train", "train_"), ("test", "test_")):
                for step in range(1, horizon + 1):
                    writer.writerow([
                        row["dataset"], row["strategy"], row["threshold"], row["model"],
                        row["repeat"], row["seed"], split_name, str(step),
                        row[f"{prefix}ser5_step{step}"],
                    ])

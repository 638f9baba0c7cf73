"""FastAPI service wrapping the forecasting pipeline.

Endpoints are synchronous wrappers over the core package: series generation
and ingestion, relevance analysis, resampling, model training/evaluation,
and the full experiment grid. All file I/O happens on the service host.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np
from fastapi import FastAPI
from fastapi.responses import JSONResponse

from .. import __version__
from .. import neuralnet as nn
from ..embedding import embed, write_dataset_csv
from ..experiment import infer_horizon, read_records, run_experiment, write_summary
from ..gan import GanTrainConfig, gan_resample
from ..generators import gen_lorenz, gen_sine
from ..metrics import EvalFrame, MetricReport, compute_report
from ..relevance import (
    ControlPoints,
    boxplot_control_points,
    build_pchip,
    partition,
    score_dataset,
    threshold_to_value,
    write_partition_csv,
)
from ..resampling import resample
from ..series import (
    TimeSeries,
    apply_scaler,
    drop_missing,
    fit_scaler,
    load_csv,
    split,
    write_csv,
)
from . import schemas as s


def _series_summary(ts: TimeSeries, output: str) -> s.SeriesSummary:
    return s.SeriesSummary(
        name=ts.name, n=len(ts),
        vmin=float(np.nanmin(ts.values)), vmax=float(np.nanmax(ts.values)),
        output=output,
    )


def _load_series(src: s.SeriesSource) -> TimeSeries:
    ts = drop_missing(load_csv(src.path, src.column))
    if src.scale:
        ts = apply_scaler(fit_scaler(ts), ts)
    return ts


def _relevance_fn(ts: TimeSeries, tail: str, whisker: float, control_points=None):
    if control_points:
        cp = ControlPoints.from_pairs(control_points)
    else:
        cp = boxplot_control_points(ts, tail, whisker)
    return build_pchip(cp)


def _report_model(report: MetricReport) -> s.MetricReportModel:
    def opt(v: float):
        return None if math.isnan(v) else v

    return s.MetricReportModel(
        rmse=report.rmse,
        ser_rt=opt(report.ser_rt),
        ser_rt_sum=opt(report.ser_rt_sum),
        ser_percentiles={str(int(p)): v for p, v in report.ser_percentiles.items()},
        per_step_rmse=report.per_step_rmse,
        per_step_ser5=report.per_step_ser5,
    )


def create_app() -> FastAPI:
    app = FastAPI(title="evforecast", version=__version__)

    @app.exception_handler(ValueError)
    async def _bad_request(request, exc):
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.exception_handler(FileNotFoundError)
    async def _not_found(request, exc):
        return JSONResponse(status_code=404, content={"detail": str(exc)})

    @app.get("/", response_model=s.ServiceInfo)
    def info():
        return s.ServiceInfo(name="evforecast", version=__version__)

    @app.post("/series/ingest", response_model=s.SeriesSummary)
    def ingest(req: s.IngestRequest):
        ts = drop_missing(load_csv(req.path, req.column))
        if req.scale:
            ts = apply_scaler(fit_scaler(ts), ts)
        write_csv(ts, req.output)
        return _series_summary(ts, req.output)

    @app.post("/series/lorenz", response_model=s.SeriesSummary)
    def lorenz(req: s.LorenzRequest):
        ts = gen_lorenz(req.n, req.dt, req.initial, req.seed, req.transient, name=req.name)
        write_csv(ts, req.output)
        return _series_summary(ts, req.output)

    @app.post("/series/sine", response_model=s.SeriesSummary)
    def sine(req: s.SineRequest):
        ts = gen_sine(req.n, req.period, req.amplitude, req.noise_sd, req.seed, req.name)
        write_csv(ts, req.output)
        return _series_summary(ts, req.output)

    @app.post("/relevance", response_model=s.RelevanceResponse)
    def relevance(req: s.RelevanceRequest):
        ts = _load_series(req.series)
        fn = _relevance_fn(ts, req.tail, req.whisker, req.control_points)
        cp = list(zip(fn.knots.values.tolist(), fn.knots.relevances.tolist()))
        table = []
        for rt in req.thresholds:
            try:
                tail = req.tail if req.tail != "both" else "upper"
                table.append(s.ThresholdValue(
                    relevance=rt, value=threshold_to_value(fn, rt, tail)))
            except ValueError as exc:
                table.append(s.ThresholdValue(relevance=rt, value=None, error=str(exc)))
        files = []
        if req.output_dir:
            out = Path(req.output_dir)
            out.mkdir(parents=True, exist_ok=True)
            import csv as _csv

            with open(out / "control_points.csv", "w", newline="") as fh:
                w = _csv.writer(fh)
                w.writerow(["value", "relevance"])
                w.writerows([[repr(v), repr(r)] for v, r in cp])
            lo = float(min(fn.knots.values[0], np.nanmin(ts.values)))
            hi = float(max(fn.knots.values[-1], np.nanmax(ts.values)))
            grid = np.linspace(lo, hi, req.grid_points)
            with open(out / "phi_grid.csv", "w", newline="") as fh:
                w = _csv.writer(fh)
                w.writerow(["x", "phi"])
                w.writerows([[repr(float(x)), repr(float(fn(x)))] for x in grid])
            with open(out / "thresholds.csv", "w", newline="") as fh:
                w = _csv.writer(fh)
                w.writerow(["relevance", "value", "error"])
                for t in table:
                    w.writerow([repr(t.relevance),
                                "" if t.value is None else repr(t.value), t.error])
            files = [str(out / "control_points.csv"), str(out / "phi_grid.csv"),
                     str(out / "thresholds.csv")]
        return s.RelevanceResponse(control_points=cp, thresholds=table, files=files)

    @app.post("/resample", response_model=s.ResampleResponse)
    def resample_endpoint(req: s.ResampleRequest):
        ts = _load_series(req.series)
        part_ts = split(ts, req.train_fraction)[0] if req.train_fraction else ts
        windows = embed(part_ts, req.window, req.horizon)
        fn = _relevance_fn(ts, req.tail, req.whisker)
        part = partition(windows, fn, req.threshold, req.aggregator)
        strat = req.strategy.to_strategy(req.seed)
        if req.strategy.kind == "gan":
            out, _ = gan_resample(part, strat, GanTrainConfig(
                epochs=req.strategy.gan_epochs, batch_size=req.strategy.gan_batch,
                latent_dim=req.strategy.gan_latent, seed=req.seed))
        else:
            out = resample(part, strat)
        write_dataset_csv(out, req.output, provenance=True)
        if req.partition_output:
            write_partition_csv(part, windows, req.partition_output)
        return s.ResampleResponse(
            n_extremes=len(part.extremes), n_commons=len(part.commons),
            n_synthetic=int(out.synthetic.sum()), n_total=len(out), output=req.output,
            partition_output=req.partition_output,
        )

    @app.post("/train", response_model=s.TrainResponse)
    def train_endpoint(req: s.TrainRequest):
        ts = _load_series(req.series)
        train_ts, _ = split(ts, req.train_fraction)
        windows = embed(train_ts, req.window, req.horizon)
        seeds = np.random.SeedSequence(req.seed).generate_state(3)
        if req.strategy.kind != "none":
            fn = _relevance_fn(ts, req.tail, req.whisker)
            part = partition(windows, fn, req.threshold, req.aggregator)
            strat = req.strategy.to_strategy(int(seeds[0]))
            if req.strategy.kind == "gan":
                windows, _ = gan_resample(part, strat, GanTrainConfig(
                    epochs=req.strategy.gan_epochs, batch_size=req.strategy.gan_batch,
                    latent_dim=req.strategy.gan_latent, seed=int(seeds[0])))
            else:
                windows = resample(part, strat)
        final_loss = None
        if req.model == "ridge":
            net = nn.ridge_to_network(nn.ridge_ar_fit(windows, req.train.ridge_lambda))
        else:
            rng = np.random.default_rng(int(seeds[1]))
            if req.model == "lstm":
                net = nn.build_lstm_forecaster(req.window, req.horizon,
                                               req.train.lstm_hidden, rng=rng)
            elif req.model == "bdlstm":
                net = nn.build_bdlstm_forecaster(req.window, req.horizon,
                                                 req.train.bdlstm_hidden, rng=rng)
            else:
                raise ValueError(f"unknown model {req.model!r}")
            cfg = nn.TrainConfig(req.train.epochs, req.train.batch_size, req.train.lr,
                                 int(seeds[2]), "mse", req.train.clip_norm)
            history = nn.train(net, windows, cfg)
            final_loss = history[-1]
        Path(req.model_output).parent.mkdir(parents=True, exist_ok=True)
        nn.save_model(net, req.model_output)
        return s.TrainResponse(model_path=req.model_output,
                               n_train_windows=len(windows), final_loss=final_loss)

    @app.post("/evaluate", response_model=s.EvaluateResponse)
    def evaluate(req: s.EvaluateRequest):
        ts = _load_series(req.series)
        if req.split == "train":
            part_ts = split(ts, req.train_fraction)[0]
        elif req.split == "test":
            part_ts = split(ts, req.train_fraction)[1]
        elif req.split == "full":
            part_ts = ts
        else:
            raise ValueError("split must be train, test or full")
        windows = embed(part_ts, req.window, req.horizon)
        fn = _relevance_fn(ts, req.tail, req.whisker)
        net = nn.load_model(req.model_path)
        frame = EvalFrame(
            truths=windows.Y,
            predictions=nn.predict(net, windows.X),
            scores=score_dataset(windows, fn, "max"),
            origins=windows.origins,
        )
        return s.EvaluateResponse(split=req.split, n_windows=len(windows),
                                  report=_report_model(compute_report(frame, req.threshold)))

    @app.post("/experiment", response_model=s.ExperimentResponse)
    def experiment(req: s.ExperimentRequest):
        rows, fresh = run_experiment(req.config)
        out = Path(req.config.output_dir)
        return s.ExperimentResponse(
            cells=len(rows), new_cells=fresh,
            records_path=str(out / "records.csv"),
            summary_path=str(out / "summary.csv"),
            per_step_path=str(out / "per_step.csv"),
        )

    @app.post("/report", response_model=s.ReportResponse)
    def report(req: s.ReportRequest):
        cols, rows = read_records(Path(req.records))
        if not rows:
            raise ValueError(f"{req.records}: no records to aggregate")
        output = req.output or str(Path(req.records).with_name("summary.csv"))
        summary = write_summary(rows, infer_horizon(cols), Path(output))
        return s.ReportResponse(rows=len(summary), output=output)

    return app


app = create_app()

"""Thin command-line client for the forecasting service.

Every subcommand issues one HTTP request. With ``--url`` (or EVFORECAST_URL)
it targets a running server; otherwise the service app runs in-process over
an ASGI transport, so no server is needed for local work.
"""

from __future__ import annotations

import asyncio
import json

import click
import httpx
import yaml


def _call(url: str | None, method: str, path: str, payload: dict | None = None) -> dict:
    async def go():
        if url:
            transport = None
            base = url
        else:
            from .service.app import create_app

            transport = httpx.ASGITransport(app=create_app())
            base = "http://evforecast.local"
        async with httpx.AsyncClient(transport=transport, base_url=base, timeout=None) as client:
            resp = await client.request(method, path, json=payload)
        if resp.status_code >= 400:
            try:
                detail = resp.json().get("detail", resp.text)
            except ValueError:
                detail = resp.text
            raise click.ClickException(f"{path} failed ({resp.status_code}): {detail}")
        return resp.json()

    return asyncio.run(go())


def _show(data: dict) -> None:
    click.echo(json.dumps(data, indent=2))


@click.group()
@click.option("--url", envvar="EVFORECAST_URL", default=None,
              help="Base URL of a running service; default runs the app in-process.")
@click.pass_context
def main(ctx, url):
    """Extreme value forecasting with relevance-based augmentation."""
    ctx.obj = url


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True)
def serve(host, port):
    """Run the forecasting service."""
    import uvicorn

    uvicorn.run("evforecast.service.app:app", host=host, port=port)


@main.command()
@click.argument("path")
@click.option("--column", default="0", help="Column name or zero-based index.")
@click.option("--out", "output", required=True, help="Destination CSV.")
@click.option("--scale/--no-scale", default=True, show_default=True)
@click.pass_obj
def ingest(url, path, column, output, scale):
    """Clean (and scale) one CSV column into a series file."""
    col = int(column) if column.lstrip("-").isdigit() else column
    _show(_call(url, "POST", "/series/ingest",
                {"path": path, "column": col, "output": output, "scale": scale}))


@main.command("gen-lorenz")
@click.option("--n", default=2000, show_default=True)
@click.option("--dt", default=0.02, show_default=True)
@click.option("--initial", nargs=3, type=float, default=(1.0, 1.0, 1.0), show_default=True)
@click.option("--seed", type=int, default=None)
@click.option("--transient", default=1000, show_default=True)
@click.option("--out", "output", required=True)
@click.pass_obj
def gen_lorenz_cmd(url, n, dt, initial, seed, transient, output):
    """Generate a Lorenz-attractor series (x coordinate)."""
    _show(_call(url, "POST", "/series/lorenz",
                {"n": n, "dt": dt, "initial": list(initial), "seed": seed,
                 "transient": transient, "output": output}))


@main.command("gen-sine")
@click.option("--n", default=500, show_default=True)
@click.option("--period", default=50.0, show_default=True)
@click.option("--amplitude", default=1.0, show_default=True)
@click.option("--noise-sd", default=0.0, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", "output", required=True)
@click.pass_obj
def gen_sine_cmd(url, n, period, amplitude, noise_sd, seed, output):
    """Generate a (noisy) sinusoid series."""
    _show(_call(url, "POST", "/series/sine",
                {"n": n, "period": period, "amplitude": amplitude,
                 "noise_sd": noise_sd, "seed": seed, "output": output}))


def _series_payload(path, column, scale):
    col = int(column) if str(column).lstrip("-").isdigit() else column
    return {"path": path, "column": col, "scale": scale}


@main.command()
@click.argument("path")
@click.option("--column", default="0")
@click.option("--scale/--no-scale", default=True, show_default=True)
@click.option("--tail", default="upper", type=click.Choice(["upper", "lower", "both"]),
              show_default=True)
@click.option("--whisker", default=1.5, show_default=True)
@click.option("--threshold", "thresholds", multiple=True, type=float,
              default=(0.7, 0.8, 0.9), show_default=True)
@click.option("--grid-points", default=201, show_default=True)
@click.option("--out-dir", default=None, help="Write control_points/phi_grid/thresholds CSVs here.")
@click.pass_obj
def relevance(url, path, column, scale, tail, whisker, thresholds, grid_points, out_dir):
    """Build the relevance function of a series and invert thresholds."""
    _show(_call(url, "POST", "/relevance",
                {"series": _series_payload(path, column, scale), "tail": tail,
                 "whisker": whisker, "thresholds": list(thresholds),
                 "grid_points": grid_points, "output_dir": out_dir}))


def _strategy_payload(kind, k_neighbors, over_ratio, under_fraction,
                      gan_epochs, gan_batch, gan_latent):
    return {"kind": kind, "k_neighbors": k_neighbors,
            "over_ratio": None if over_ratio == "balance" else float(over_ratio),
            "under_fraction": under_fraction, "gan_epochs": gan_epochs,
            "gan_batch": gan_batch, "gan_latent": gan_latent}


strategy_options = [
    click.option("--strategy", "kind", default="smoter", show_default=True,
                 type=click.Choice(["none", "replicate", "smoter", "smoter-bin", "gan"])),
    click.option("--k-neighbors", default=5, show_default=True),
    click.option("--over-ratio", default="2.0", show_default=True,
                 help="Multiplier on the extreme count, or 'balance'."),
    click.option("--under-fraction", default=1.0, show_default=True),
    click.option("--gan-epochs", default=200, show_default=True),
    click.option("--gan-batch", default=32, show_default=True),
    click.option("--gan-latent", default=32, show_default=True),
]


def with_options(options):
    def deco(fn):
        for opt in reversed(options):
            fn = opt(fn)
        return fn

    return deco


@main.command()
@click.argument("path")
@click.option("--column", default="0")
@click.option("--scale/--no-scale", default=True, show_default=True)
@click.option("--window", default=5, show_default=True)
@click.option("--horizon", default=5, show_default=True)
@click.option("--train-fraction", type=float, default=None,
              help="Resample only the first fraction of the series.")
@click.option("--tail", default="upper", show_default=True)
@click.option("--aggregator", default="max", show_default=True)
@click.option("--threshold", default=0.7, show_default=True)
@with_options(strategy_options)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", "output", required=True)
@click.option("--partition-out", default=None,
              help="Also export the origin/score/class partition CSV here.")
@click.pass_obj
def resample(url, path, column, scale, window, horizon, train_fraction, tail, aggregator,
             threshold, kind, k_neighbors, over_ratio, under_fraction,
             gan_epochs, gan_batch, gan_latent, seed, output, partition_out):
    """Partition a series' windows and emit the augmented dataset CSV."""
    _show(_call(url, "POST", "/resample",
                {"series": _series_payload(path, column, scale), "window": window,
                 "horizon": horizon, "train_fraction": train_fraction, "tail": tail,
                 "aggregator": aggregator, "threshold": threshold,
                 "strategy": _strategy_payload(kind, k_neighbors, over_ratio, under_fraction,
                                               gan_epochs, gan_batch, gan_latent),
                 "seed": seed, "output": output, "partition_output": partition_out}))


@main.command()
@click.argument("path")
@click.option("--column", default="0")
@click.option("--scale/--no-scale", default=True, show_default=True)
@click.option("--window", default=5, show_default=True)
@click.option("--horizon", default=5, show_default=True)
@click.option("--train-fraction", default=0.7, show_default=True)
@click.option("--threshold", default=0.7, show_default=True)
@click.option("--tail", default="upper", show_default=True)
@click.option("--model", default="bdlstm", type=click.Choice(["ridge", "lstm", "bdlstm"]),
              show_default=True)
@with_options(strategy_options)
@click.option("--epochs", default=100, show_default=True)
@click.option("--batch-size", default=32, show_default=True)
@click.option("--lr", default=1e-3, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", "model_output", required=True, help="Model file destination.")
@click.pass_obj
def train(url, path, column, scale, window, horizon, train_fraction, threshold, tail, model,
          kind, k_neighbors, over_ratio, under_fraction, gan_epochs, gan_batch, gan_latent,
          epochs, batch_size, lr, seed, model_output):
    """Train a forecaster on the (optionally resampled) training split."""
    _show(_call(url, "POST", "/train",
                {"series": _series_payload(path, column, scale), "window": window,
                 "horizon": horizon, "train_fraction": train_fraction,
                 "threshold": threshold, "tail": tail, "model": model,
                 "strategy": _strategy_payload(kind, k_neighbors, over_ratio, under_fraction,
                                               gan_epochs, gan_batch, gan_latent),
                 "train": {"epochs": epochs, "batch_size": batch_size, "lr": lr},
                 "seed": seed, "model_output": model_output}))


@main.command()
@click.argument("model_path")
@click.argument("path")
@click.option("--column", default="0")
@click.option("--scale/--no-scale", default=True, show_default=True)
@click.option("--window", default=5, show_default=True)
@click.option("--horizon", default=5, show_default=True)
@click.option("--train-fraction", default=0.7, show_default=True)
@click.option("--split", default="test", type=click.Choice(["train", "test", "full"]),
              show_default=True)
@click.option("--threshold", default=0.7, show_default=True)
@click.option("--tail", default="upper", show_default=True)
@click.pass_obj
def evaluate(url, model_path, path, column, scale, window, horizon, train_fraction,
             split, threshold, tail):
    """Score a saved model on a series split."""
    _show(_call(url, "POST", "/evaluate",
                {"model_path": model_path,
                 "series": _series_payload(path, column, scale), "window": window,
                 "horizon": horizon, "train_fraction": train_fraction, "split": split,
                 "threshold": threshold, "tail": tail}))


@main.command()
@click.argument("config_path")
@click.option("--seed", type=int, default=None, help="Override the config's base_seed.")
@click.option("--output-dir", default=None, help="Override the config's output_dir.")
@click.option("--repeats", type=int, default=None, help="Override the config's repeats.")
@click.pass_obj
def experiment(url, config_path, seed, output_dir, repeats):
    """Run the full experiment grid described by a YAML/JSON config file."""
    with open(config_path, encoding="utf-8") as fh:
        config = yaml.safe_load(fh)
    if seed is not None:
        config["base_seed"] = seed
    if output_dir is not None:
        config["output_dir"] = output_dir
    if repeats is not None:
        config["repeats"] = repeats
    _show(_call(url, "POST", "/experiment", {"config": config}))


@main.command()
@click.argument("records")
@click.option("--out", "output", default=None, help="Summary CSV destination.")
@click.pass_obj
def report(url, records, output):
    """Aggregate a records.csv into summary statistics with ranking flags."""
    _show(_call(url, "POST", "/report", {"records": records, "output": output}))


if __name__ == "__main__":
    main(prog_name="evforecast", obj=None)  # pragma: no cover

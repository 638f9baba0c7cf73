"""Univariate series handling: CSV I/O, cleaning, min-max scaling, chronological split.

Missing observations are carried as NaN sentinels until :func:`drop_missing`
removes them; nothing is ever interpolated silently.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

# Floats are written with 17 significant digits so that a write/read cycle
# reproduces every finite double bit-exactly.
FLOAT_FMT = "%.17g"


@dataclass(frozen=True)
class TimeSeries:
    """Ordered scalar observations with integer time stamps.

    ``values`` may contain NaN (missing markers); ``index`` is strictly
    increasing and aligned with ``values``.
    """

    values: np.ndarray
    index: np.ndarray = field(default=None)  # type: ignore[assignment]
    name: str = "series"

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1 or values.size < 1:
            raise ValueError("a series needs at least one observation")
        index = self.index
        if index is None:
            index = np.arange(values.size)
        index = np.asarray(index, dtype=int)
        if index.shape != values.shape:
            raise ValueError("values and index must have equal length")
        if index.size > 1 and np.any(np.diff(index) <= 0):
            raise ValueError("index must be strictly increasing")
        values.setflags(write=False)
        index.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "index", index)

    def __len__(self) -> int:
        return self.values.size

    @property
    def has_missing(self) -> bool:
        return bool(np.isnan(self.values).any())


@dataclass(frozen=True)
class Scaler:
    """Min-max bounds observed at fit time; maps the fit range onto [0, 1]."""

    vmin: float
    vmax: float

    def __post_init__(self):
        if not (self.vmax > self.vmin):
            raise ValueError("scaler requires max > min (constant series cannot be scaled)")


def load_csv(path, column) -> TimeSeries:
    """Read one column of a headered CSV as a TimeSeries.

    ``column`` is a header name or a zero-based position. Empty cells become
    NaN missing markers; any other unparseable cell raises with its row number.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file, header row required") from None
        if isinstance(column, int):
            if not 0 <= column < len(header):
                raise ValueError(f"{path}: column index {column} out of range")
            col = column
            name = header[column]
        else:
            if column not in header:
                raise ValueError(f"{path}: column {column!r} not found in header {header}")
            col = header.index(column)
            name = column
        values = []
        for rownum, row in enumerate(reader, start=1):
            cell = row[col].strip() if col < len(row) else ""
            if cell == "":
                values.append(math.nan)
                continue
            try:
                values.append(float(cell))
            except ValueError:
                raise ValueError(f"{path}: row {rownum}: cannot parse {cell!r} as a number") from None
    if not values:
        raise ValueError(f"{path}: no data rows")
    return TimeSeries(np.array(values), name=name)


def write_csv(ts: TimeSeries, path) -> None:
    """Write a series as ``index,<name>`` with 17-significant-digit floats."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", ts.name])
        for i, v in zip(ts.index, ts.values):
            writer.writerow([int(i), "" if math.isnan(v) else FLOAT_FMT % v])


def drop_missing(ts: TimeSeries) -> TimeSeries:
    """Remove NaN observations, keeping the original index of surviving rows."""
    keep = ~np.isnan(ts.values)
    if not keep.any():
        raise ValueError(f"{ts.name}: empty after cleaning")
    if keep.all():
        return ts
    return TimeSeries(ts.values[keep], ts.index[keep], ts.name)


def fit_scaler(ts: TimeSeries) -> Scaler:
    """Observe min/max of a series (NaNs ignored) for [0, 1] scaling."""
    vmin = float(np.nanmin(ts.values))
    vmax = float(np.nanmax(ts.values))
    return Scaler(vmin, vmax)


def apply_scaler(s: Scaler, ts: TimeSeries) -> TimeSeries:
    """Map x to (x - min) / (max - min). Values outside the fit range extend
    linearly beyond [0, 1] rather than clamping."""
    return TimeSeries((ts.values - s.vmin) / (s.vmax - s.vmin), ts.index, ts.name)


def invert_scaler(s: Scaler, ts: TimeSeries) -> TimeSeries:
    return TimeSeries(ts.values * (s.vmax - s.vmin) + s.vmin, ts.index, ts.name)


def split(ts: TimeSeries, train_fraction: float) -> tuple[TimeSeries, TimeSeries]:
    """Chronological split: first floor(N*f) observations train, rest test."""
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must lie in (0, 1)")
    n_train = int(len(ts) * train_fraction)
    if n_train < 1 or n_train >= len(ts):
        raise ValueError(
            f"split of {len(ts)} observations at fraction {train_fraction} leaves an empty part"
        )
    train = TimeSeries(ts.values[:n_train], ts.index[:n_train], ts.name)
    test = TimeSeries(ts.values[n_train:], ts.index[n_train:], ts.name)
    return train, test

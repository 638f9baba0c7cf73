"""Sliding-window phase-space reconstruction of a scalar series.

A length-N series becomes N - D - P + 1 supervised pairs: an input window of
the D most recent observations (stored oldest-first) and a target window of
the next P observations. The time delay between window entries is fixed to 1.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .series import FLOAT_FMT, TimeSeries

# seed/neighbor origin value meaning "not applicable"
NO_ORIGIN = -1


@dataclass
class WindowPair:
    """One (input window, target window) sample.

    ``origin`` is the position of the last input observation within the source
    series; synthetic samples carry origin -1 plus provenance fields.
    """

    x: np.ndarray
    y: np.ndarray
    origin: int
    synthetic: bool = False
    seed_origin: int = NO_ORIGIN
    neighbor_origin: int = NO_ORIGIN
    provenance: str = ""


@dataclass
class WindowDataset:
    """Column-major store of window pairs: X is (n, D), Y is (n, P)."""

    X: np.ndarray
    Y: np.ndarray
    origins: np.ndarray
    source: str = ""
    synthetic: np.ndarray = field(default=None)  # type: ignore[assignment]
    seed_origins: np.ndarray = field(default=None)  # type: ignore[assignment]
    neighbor_origins: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        self.Y = np.asarray(self.Y, dtype=float)
        self.origins = np.asarray(self.origins, dtype=int)
        n = self.X.shape[0]
        if self.X.ndim != 2 or self.Y.ndim != 2 or self.Y.shape[0] != n or self.origins.shape != (n,):
            raise ValueError("X, Y and origins must be row-aligned 2d/1d arrays")
        if self.synthetic is None:
            self.synthetic = np.zeros(n, dtype=bool)
        if self.seed_origins is None:
            self.seed_origins = np.full(n, NO_ORIGIN, dtype=int)
        if self.neighbor_origins is None:
            self.neighbor_origins = np.full(n, NO_ORIGIN, dtype=int)

    def __len__(self) -> int:
        return self.X.shape[0]

    @property
    def window(self) -> int:
        return self.X.shape[1]

    @property
    def horizon(self) -> int:
        return self.Y.shape[1]

    def pair(self, i: int) -> WindowPair:
        return WindowPair(
            self.X[i].copy(),
            self.Y[i].copy(),
            int(self.origins[i]),
            bool(self.synthetic[i]),
            int(self.seed_origins[i]),
            int(self.neighbor_origins[i]),
        )

    def take(self, idx) -> "WindowDataset":
        idx = np.asarray(idx, dtype=int)
        return WindowDataset(
            self.X[idx], self.Y[idx], self.origins[idx], self.source,
            self.synthetic[idx], self.seed_origins[idx], self.neighbor_origins[idx],
        )


def embed(ts: TimeSeries, window: int, horizon: int, delay: int = 1) -> WindowDataset:
    """Reconstruct a series as (window, horizon) pairs with stride 1.

    ``delay`` exists for forward compatibility only; values other than 1 are
    rejected.
    """
    if window < 1 or horizon < 1:
        raise ValueError("window and horizon must be positive")
    if delay != 1:
        raise ValueError("only delay=1 embeddings are supported")
    if ts.has_missing:
        raise ValueError("cannot embed a series containing missing values")
    v = ts.values
    n_pairs = len(v) - window - horizon + 1
    if n_pairs <= 0:
        raise ValueError(
            f"series of length {len(v)} too short for window={window}, horizon={horizon}"
        )
    # row t of the index matrix selects [t, t+1, ..., t+window+horizon-1]
    idx = np.arange(n_pairs)[:, None] + np.arange(window + horizon)[None, :]
    full = v[idx]
    origins = np.arange(window - 1, window - 1 + n_pairs)
    return WindowDataset(full[:, :window], full[:, window:], origins, ts.name)


def flatten_pair(p: WindowPair) -> np.ndarray:
    """Concatenate input and target windows into one D+P vector."""
    return np.concatenate([p.x, p.y])


def unflatten(v: np.ndarray, window: int, horizon: int) -> WindowPair:
    v = np.asarray(v, dtype=float)
    if v.shape != (window + horizon,):
        raise ValueError(f"expected a vector of length {window + horizon}, got shape {v.shape}")
    return WindowPair(v[:window].copy(), v[window:].copy(), NO_ORIGIN)


def joint_matrix(ds: WindowDataset) -> np.ndarray:
    """All pairs flattened: an (n, D+P) matrix consumed by resamplers."""
    return np.hstack([ds.X, ds.Y])


def write_dataset_csv(ds: WindowDataset, path, provenance: bool = False) -> None:
    """Serialize as x_1..x_D, y_1..y_P, origin [, synthetic, seed_origin, neighbor_origin]."""
    d, p = ds.window, ds.horizon
    header = [f"x_{i + 1}" for i in range(d)] + [f"y_{i + 1}" for i in range(p)] + ["origin"]
    if provenance:
        header += ["synthetic", "seed_origin", "neighbor_origin"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(len(ds)):
            row = [FLOAT_FMT % v for v in ds.X[i]] + [FLOAT_FMT % v for v in ds.Y[i]]
            row.append(str(int(ds.origins[i])))
            if provenance:
                row.append("1" if ds.synthetic[i] else "0")
                row.append("" if ds.seed_origins[i] == NO_ORIGIN else str(int(ds.seed_origins[i])))
                row.append("" if ds.neighbor_origins[i] == NO_ORIGIN else str(int(ds.neighbor_origins[i])))
            writer.writerow(row)


def read_dataset_csv(path) -> WindowDataset:
    """Inverse of :func:`write_dataset_csv` (provenance columns optional)."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        d = sum(1 for h in header if h.startswith("x_"))
        p = sum(1 for h in header if h.startswith("y_"))
        has_prov = "synthetic" in header
        xs, ys, origins, synth, seeds, neighbors = [], [], [], [], [], []
        for row in reader:
            xs.append([float(c) for c in row[:d]])
            ys.append([float(c) for c in row[d:d + p]])
            origins.append(int(row[d + p]))
            if has_prov:
                synth.append(row[d + p + 1] == "1")
                seeds.append(int(row[d + p + 2]) if row[d + p + 2] else NO_ORIGIN)
                neighbors.append(int(row[d + p + 3]) if row[d + p + 3] else NO_ORIGIN)
    ds = WindowDataset(np.array(xs), np.array(ys), np.array(origins))
    if has_prov:
        ds.synthetic = np.array(synth, dtype=bool)
        ds.seed_origins = np.array(seeds, dtype=int)
        ds.neighbor_origins = np.array(neighbors, dtype=int)
    return ds

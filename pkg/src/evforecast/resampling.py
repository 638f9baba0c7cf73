"""Training-set rebalancing around extreme windows.

Three augmentation families share one counting contract:

    output = ceil(under_fraction * |commons|) undersampled commons
           + all extremes
           + ceil((over_ratio - 1) * |extremes|) synthetic extremes

replicate   synthetics are exact copies of randomly chosen extremes
smoter      synthetics interpolate a seed extreme towards one of its k
            nearest extreme neighbours (Euclidean distance on the flattened
            input||target vector), with a uniform interpolation fraction;
            the target is moved by the same fraction, which matches the
            inverse-distance weighted average along the segment
smoter-bin  as smoter, but seed and neighbour must share a bin of
            temporally consecutive extreme windows; a seed whose bin is a
            singleton falls back to replication

All generation is driven by a seeded generator, so a strategy reproduces its
output bit-identically.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .embedding import NO_ORIGIN, WindowDataset, WindowPair, joint_matrix
from .relevance import Partition

STRATEGY_KINDS = ("none", "replicate", "smoter", "smoter-bin", "gan")


@dataclass(frozen=True)
class ResampleStrategy:
    """A named augmentation policy and its hyperparameters.

    ``over_ratio`` is the target multiplier on the extreme count; ``None``
    asks for the ratio that balances extremes against the kept commons.
    """

    kind: str = "none"
    k_neighbors: int = 5
    over_ratio: float | None = 2.0
    under_fraction: float = 1.0
    rng_seed: int = 0

    def __post_init__(self):
        if self.kind not in STRATEGY_KINDS:
            raise ValueError(f"kind must be one of {STRATEGY_KINDS}")
        if self.k_neighbors < 1:
            raise ValueError("k_neighbors must be >= 1")
        if self.over_ratio is not None and self.over_ratio < 1.0:
            raise ValueError("over_ratio must be >= 1")
        if not 0.0 < self.under_fraction <= 1.0:
            raise ValueError("under_fraction must lie in (0, 1]")


@dataclass(frozen=True)
class Bin:
    """Origins of one maximal run of temporally consecutive extreme windows."""

    members: tuple


def knn_extremes(extremes: WindowDataset, k: int) -> np.ndarray:
    """Indices of the k nearest other extremes for every extreme.

    Distances are Euclidean on the flattened D+P vectors; k is truncated to
    |extremes| - 1. Returns an (n, k) index array ordered nearest first.
    """
    n = len(extremes)
    if n < 2:
        raise ValueError("nearest-neighbour search needs at least 2 extremes")
    k = min(k, n - 1)
    z = joint_matrix(extremes)
    d2 = np.sum((z[:, None, :] - z[None, :, :]) ** 2, axis=2)
    np.fill_diagonal(d2, np.inf)
    order = np.argsort(d2, axis=1, kind="stable")
    return order[:, :k]


def interpolate_pair(seed: WindowPair, neighbor: WindowPair, r: float) -> WindowPair:
    """Blend seed towards neighbour by fraction r on inputs and targets alike."""
    if seed.x.shape != neighbor.x.shape or seed.y.shape != neighbor.y.shape:
        raise ValueError("seed and neighbour windows must share dimensions")
    return WindowPair(
        x=seed.x + r * (neighbor.x - seed.x),
        y=seed.y + r * (neighbor.y - seed.y),
        origin=NO_ORIGIN,
        synthetic=True,
        seed_origin=seed.origin,
        neighbor_origin=neighbor.origin,
        provenance="smoter",
    )


def compute_bins(part: Partition) -> list[Bin]:
    """Maximal runs of extreme windows whose origins differ by exactly 1."""
    origins = part.extremes.origins
    bins: list[Bin] = []
    run: list[int] = []
    for o in origins:
        o = int(o)
        if run and o != run[-1] + 1:
            bins.append(Bin(tuple(run)))
            run = []
        run.append(o)
    if run:
        bins.append(Bin(tuple(run)))
    return bins


def _counts(part: Partition, strat: ResampleStrategy) -> tuple[int, int, float]:
    n_ext = len(part.extremes)
    n_com = len(part.commons)
    n_keep = int(np.ceil(strat.under_fraction * n_com))
    ratio = strat.over_ratio
    if ratio is None:
        ratio = max(1.0, n_keep / n_ext) if n_ext else 1.0
    n_synth = int(np.ceil((ratio - 1.0) * n_ext))
    return n_keep, n_synth, ratio


def _assemble(part: Partition, strat: ResampleStrategy, synth_x, synth_y,
              seed_origins, neighbor_origins, rng) -> WindowDataset:
    n_keep, _, _ = _counts(part, strat)
    commons = part.commons
    if n_keep < len(commons):
        keep = np.sort(rng.choice(len(commons), size=n_keep, replace=False))
        commons = commons.take(keep)
    ext = part.extremes
    n_synth = len(synth_x)
    sx = np.asarray(synth_x, dtype=float).reshape(n_synth, ext.window)
    sy = np.asarray(synth_y, dtype=float).reshape(n_synth, ext.horizon)
    return WindowDataset(
        X=np.vstack([commons.X, ext.X, sx]),
        Y=np.vstack([commons.Y, ext.Y, sy]),
        origins=np.concatenate([commons.origins, ext.origins, np.full(n_synth, NO_ORIGIN)]),
        source=ext.source,
        synthetic=np.concatenate(
            [commons.synthetic, ext.synthetic, np.ones(n_synth, dtype=bool)]
        ),
        seed_origins=np.concatenate(
            [commons.seed_origins, ext.seed_origins, np.asarray(seed_origins, dtype=int)]
        ),
        neighbor_origins=np.concatenate(
            [commons.neighbor_origins, ext.neighbor_origins, np.asarray(neighbor_origins, dtype=int)]
        ),
    )


def smoter(part: Partition, strat: ResampleStrategy) -> WindowDataset:
    """SMOTE for regression over the extreme windows of a partition."""
    ext = part.extremes
    if len(ext) < 2:
        raise ValueError("smoter needs at least 2 extremes")
    rng = np.random.default_rng(strat.rng_seed)
    _, n_synth, _ = _counts(part, strat)
    neighbors = knn_extremes(ext, strat.k_neighbors)
    sx, sy, seeds, nbrs = [], [], [], []
    for _ in range(n_synth):
        i = int(rng.integers(len(ext)))
        j = int(neighbors[i, rng.integers(neighbors.shape[1])])
        r = float(rng.uniform())
        sx.append(ext.X[i] + r * (ext.X[j] - ext.X[i]))
        sy.append(ext.Y[i] + r * (ext.Y[j] - ext.Y[i]))
        seeds.append(int(ext.origins[i]))
        nbrs.append(int(ext.origins[j]))
    return _assemble(part, strat, sx, sy, seeds, nbrs, rng)


def smoter_bin(part: Partition, strat: ResampleStrategy) -> WindowDataset:
    """SMOTE-R restricted to bins of consecutive extremes.

    Seeds are drawn uniformly over extremes (hence proportionally to bin
    size); neighbours come from the seed's own bin, nearest first; a
    singleton bin replicates its member.
    """
    ext = part.extremes
    if len(ext) == 0:
        raise ValueError("smoter-bin needs at least 1 extreme")
    rng = np.random.default_rng(strat.rng_seed)
    _, n_synth, _ = _counts(part, strat)
    origin_to_row = {int(o): i for i, o in enumerate(ext.origins)}
    bin_of = {}
    for b in compute_bins(part):
        for o in b.members:
            bin_of[o] = b
    z = joint_matrix(ext)
    sx, sy, seeds, nbrs = [], [], [], []
    for _ in range(n_synth):
        i = int(rng.integers(len(ext)))
        seed_origin = int(ext.origins[i])
        bin_rows = [origin_to_row[o] for o in bin_of[seed_origin].members if o != seed_origin]
        if not bin_rows:
            # lone extreme: replicate rather than drop
            sx.append(ext.X[i].copy())
            sy.append(ext.Y[i].copy())
            seeds.append(seed_origin)
            nbrs.append(seed_origin)
            continue
        d2 = np.sum((z[bin_rows] - z[i]) ** 2, axis=1)
        order = np.argsort(d2, kind="stable")[: min(strat.k_neighbors, len(bin_rows))]
        j = bin_rows[int(order[rng.integers(order.size)])]
        r = float(rng.uniform())
        sx.append(ext.X[i] + r * (ext.X[j] - ext.X[i]))
        sy.append(ext.Y[i] + r * (ext.Y[j] - ext.Y[i]))
        seeds.append(seed_origin)
        nbrs.append(int(ext.origins[j]))
    return _assemble(part, strat, sx, sy, seeds, nbrs, rng)


def replicate_oversample(part: Partition, strat: ResampleStrategy) -> WindowDataset:
    """Oversampling by replication: synthetics are exact copies of extremes."""
    ext = part.extremes
    if len(ext) < 1:
        raise ValueError("replication needs at least 1 extreme")
    rng = np.random.default_rng(strat.rng_seed)
    _, n_synth, _ = _counts(part, strat)
    picks = rng.integers(len(ext), size=n_synth)
    sx = ext.X[picks]
    sy = ext.Y[picks]
    seeds = ext.origins[picks]
    return _assemble(part, strat, sx, sy, seeds, seeds, rng)


def resample(part: Partition, strat: ResampleStrategy) -> WindowDataset:
    """Dispatch on strategy kind. ``none`` reassembles the partition unchanged;
    ``gan`` is handled by the GAN module and rejected here."""
    if strat.kind == "none":
        order = np.argsort(
            np.concatenate([part.commons.origins, part.extremes.origins]), kind="stable"
        )
        merged = WindowDataset(
            X=np.vstack([part.commons.X, part.extremes.X]),
            Y=np.vstack([part.commons.Y, part.extremes.Y]),
            origins=np.concatenate([part.commons.origins, part.extremes.origins]),
            source=part.extremes.source,
        )
        return merged.take(order)
    if strat.kind == "replicate":
        return replicate_oversample(part, strat)
    if strat.kind == "smoter":
        return smoter(part, strat)
    if strat.kind == "smoter-bin":
        return smoter_bin(part, strat)
    raise ValueError(f"strategy kind {strat.kind!r} is not handled by resample()")


def with_seed(strat: ResampleStrategy, seed: int) -> ResampleStrategy:
    return replace(strat, rng_seed=int(seed))

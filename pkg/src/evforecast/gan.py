"""Fully connected 1D GAN over flattened extreme windows.

The generator maps standard-normal latents to D+P vectors in [0, 1]
(sigmoid output); the discriminator maps D+P vectors to a probability.
Hidden sizes are (64, 128, 256) and (256, 128, 64) with leaky-relu(0.2)
activations. Training alternates one discriminator step (real=1, fake=0)
with one generator step (fake toward 1) per batch, both under Adam with
binary cross-entropy.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .embedding import NO_ORIGIN, WindowDataset
from .neuralnet import (
    AdamState,
    DenseLayer,
    Network,
    TrainingDiverged,
    adam_step,
    bce_loss,
)

GENERATOR_HIDDEN = (64, 128, 256)
DISCRIMINATOR_HIDDEN = (256, 128, 64)


@dataclass
class GanModel:
    generator: Network
    discriminator: Network
    latent_dim: int
    window: int
    horizon: int


@dataclass(frozen=True)
class GanTrainConfig:
    epochs: int = 200
    batch_size: int = 32
    lr_g: float = 1e-3
    lr_d: float = 1e-3
    latent_dim: int = 32
    seed: int = 0
    label_smoothing: float = 0.0
    diversity_probe: int = 100

    def __post_init__(self):
        if min(self.epochs, self.batch_size, self.latent_dim) < 1:
            raise ValueError("epochs, batch_size and latent_dim must be positive")
        if self.lr_g <= 0 or self.lr_d <= 0:
            raise ValueError("learning rates must be positive")


def _stack(sizes, n_in, n_out, out_activation, rng, prefix):
    layers = []
    last = n_in
    for i, width in enumerate(sizes):
        layers.append(DenseLayer(last, width, "leaky_relu", 0.2, rng, f"{prefix}_fc{i + 1}"))
        last = width
    layers.append(DenseLayer(last, n_out, out_activation, rng=rng, name=f"{prefix}_out"))
    return Network(layers, prefix)


def build_1d_gan(window: int, horizon: int, latent_dim: int = 32,
                 rng: np.random.Generator | None = None) -> GanModel:
    """Generator latent -> D+P (sigmoid), discriminator D+P -> 1 (sigmoid)."""
    if window + horizon < 1 or latent_dim < 1:
        raise ValueError("window+horizon and latent_dim must be positive")
    rng = rng or np.random.default_rng()
    out = window + horizon
    gen = _stack(GENERATOR_HIDDEN, latent_dim, out, "sigmoid", rng, "gen")
    disc = _stack(DISCRIMINATOR_HIDDEN, out, 1, "sigmoid", rng, "disc")
    return GanModel(gen, disc, latent_dim, window, horizon)


def _pairwise_mean_distance(samples: np.ndarray) -> float:
    # mode-collapse telemetry: mean Euclidean distance over all sample pairs
    n = samples.shape[0]
    if n < 2:
        return 0.0
    d2 = np.sum((samples[:, None, :] - samples[None, :, :]) ** 2, axis=2)
    iu = np.triu_indices(n, k=1)
    return float(np.mean(np.sqrt(d2[iu])))


def train_gan(gan: GanModel, extremes: WindowDataset, cfg: GanTrainConfig):
    """Adversarial training on the flattened extremes.

    Returns (d_losses, g_losses, diversity) per-epoch curves; diversity is
    the pairwise mean distance among ``cfg.diversity_probe`` fresh samples.
    """
    real = np.hstack([extremes.X, extremes.Y])
    n = real.shape[0]
    if n < cfg.batch_size:
        raise ValueError(f"need at least batch_size={cfg.batch_size} extremes, got {n}")
    rng = np.random.default_rng(cfg.seed)
    g_state = AdamState.for_params(gan.generator.params(), lr=cfg.lr_g)
    d_state = AdamState.for_params(gan.discriminator.params(), lr=cfg.lr_d)
    real_label = 1.0 - cfg.label_smoothing
    d_losses, g_losses, diversity = [], [], []
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        d_epoch, g_epoch = [], []
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            batch = real[idx]
            bsz = batch.shape[0]

            # discriminator step: real toward 1, generated toward 0
            z = rng.standard_normal((bsz, gan.latent_dim))
            fake = gan.generator.forward(z)
            p_real = gan.discriminator.forward(batch)
            loss_r, grad_r = bce_loss(p_real, real_label)
            gan.discriminator.zero_grads()
            gan.discriminator.backward(grad_r)
            p_fake = gan.discriminator.forward(fake)
            loss_f, grad_f = bce_loss(p_fake, 0.0)
            gan.discriminator.backward(grad_f)
            d_loss = 0.5 * (loss_r + loss_f)
            if not np.isfinite(d_loss):
                raise TrainingDiverged(f"discriminator loss non-finite at epoch {epoch}")
            adam_step(gan.discriminator.params(), gan.discriminator.grads(), d_state)

            # generator step: push generated samples toward the real label
            z = rng.standard_normal((bsz, gan.latent_dim))
            fake = gan.generator.forward(z)
            p_fake = gan.discriminator.forward(fake)
            g_loss, grad = bce_loss(p_fake, 1.0)
            if not np.isfinite(g_loss):
                raise TrainingDiverged(f"generator loss non-finite at epoch {epoch}")
            gan.discriminator.zero_grads()
            grad_fake = gan.discriminator.backward(grad)
            gan.generator.zero_grads()
            gan.generator.backward(grad_fake)
            adam_step(gan.generator.params(), gan.generator.grads(), g_state)

            d_epoch.append(d_loss)
            g_epoch.append(g_loss)
        d_losses.append(float(np.mean(d_epoch)))
        g_losses.append(float(np.mean(g_epoch)))
        probe = gan.generator.forward(rng.standard_normal((cfg.diversity_probe, gan.latent_dim)))
        diversity.append(_pairwise_mean_distance(probe))
    return d_losses, g_losses, diversity


def sample_synthetic(gan: GanModel, n: int, rng: np.random.Generator) -> WindowDataset:
    """Draw n generated window pairs, marked synthetic with no seed/neighbour."""
    if n <= 0:
        raise ValueError("n must be positive")
    z = rng.standard_normal((n, gan.latent_dim))
    flat = gan.generator.forward(z)
    d = gan.window
    return WindowDataset(
        X=flat[:, :d],
        Y=flat[:, d:],
        origins=np.full(n, NO_ORIGIN),
        source="gan",
        synthetic=np.ones(n, dtype=bool),
    )


def gan_resample(part, strat, cfg: GanTrainConfig | None = None,
                 relevance_fn=None, relevance_filter: bool = False):
    """Strategy kind ``gan``: train a fresh GAN on the partition's extremes and
    append generated samples under the shared resampling count contract.

    With ``relevance_filter`` set, generated pairs whose max target relevance
    falls below the partition threshold are rejected and redrawn (bounded).
    """
    from .relevance import score_dataset
    from .resampling import _assemble, _counts

    cfg = cfg or GanTrainConfig(seed=strat.rng_seed)
    ext = part.extremes
    _, n_synth, _ = _counts(part, strat)
    batch = min(cfg.batch_size, len(ext))
    run_cfg = GanTrainConfig(cfg.epochs, batch, cfg.lr_g, cfg.lr_d,
                             cfg.latent_dim, strat.rng_seed,
                             cfg.label_smoothing, cfg.diversity_probe)
    rng = np.random.default_rng([strat.rng_seed, 1])
    gan = build_1d_gan(ext.window, ext.horizon, run_cfg.latent_dim,
                       np.random.default_rng([strat.rng_seed, 0]))
    curves = train_gan(gan, ext, run_cfg)
    if n_synth == 0:
        sampled = np.empty((0, ext.window + ext.horizon))
    else:
        drawn = sample_synthetic(gan, n_synth, rng)
        sampled = np.hstack([drawn.X, drawn.Y])
        if relevance_filter and relevance_fn is not None:
            kept = sampled[score_dataset(drawn, relevance_fn) >= part.threshold]
            for _ in range(20):
                if kept.shape[0] >= n_synth:
                    break
                extra = sample_synthetic(gan, n_synth, rng)
                ok = score_dataset(extra, relevance_fn) >= part.threshold
                kept = np.vstack([kept, np.hstack([extra.X, extra.Y])[ok]])
            if kept.shape[0] < n_synth:
                raise TrainingDiverged(
                    "relevance filter rejected too many generated samples"
                )
            sampled = kept[:n_synth]
    d = ext.window
    out = _assemble(part, strat, sampled[:, :d], sampled[:, d:],
                    np.full(sampled.shape[0], NO_ORIGIN),
                    np.full(sampled.shape[0], NO_ORIGIN), rng)
    return out, curves


def write_loss_curves(path, d_losses, g_losses, diversity) -> None:
    import csv

    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "d_loss", "g_loss", "diversity"])
        for i, (d, g, div) in enumerate(zip(d_losses, g_losses, diversity)):
            writer.writerow([i, repr(d), repr(g), repr(div)])

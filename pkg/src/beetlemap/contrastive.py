"""Contrastive objectives and training loops for the spectral encoder.

Self-supervised stage: every spectrum in a batch is paired with a
magnitude-warped copy of itself and the encoder is trained so each view
finds its partner among all other embeddings (normalized-temperature
cross entropy over cosine similarities).

Supervised stage: the convolutional trunk is frozen and only the
projection head is tuned so that embeddings of samples with similar
abundance labels (Euclidean distance below a threshold) attract each
other against the rest of the batch.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.interpolate import CubicSpline

from .nn import AdamW, EncoderModel
from .rng import substream

__all__ = [
    "AugmentationConfig",
    "PretrainConfig",
    "FinetuneConfig",
    "EpochRecord",
    "magnitude_warp",
    "cosine_sim",
    "simclr_loss",
    "finetune_loss",
    "pretrain",
    "finetune",
    "write_history_csv",
    "read_history_csv",
]

#: Embedding rows with a norm below this are rejected (cosine undefined).
NORM_FLOOR = 1e-12


@dataclass(frozen=True)
class AugmentationConfig:
    """Magnitude-warping parameters: ``x' = spline(knots) * (alpha * x + noise)``."""

    alpha_range: tuple[float, float] = (0.9, 1.1)
    sigma1: float = 0.01  # per-band additive noise scale
    sigma2: float = 0.1  # spline knot scale around 1
    num_knots: int = 8
    seed: int = 0

    def __post_init__(self) -> None:
        lo, hi = self.alpha_range
        if not (np.isfinite(lo) and np.isfinite(hi) and 0 < lo <= hi):
            raise ValueError(f"alpha_range must satisfy 0 < lo <= hi, got {self.alpha_range}")
        if self.sigma1 < 0 or self.sigma2 < 0:
            raise ValueError("noise scales must be non-negative")
        if self.num_knots < 2:
            raise ValueError("need at least 2 spline knots")


@dataclass(frozen=True)
class PretrainConfig:
    """Self-supervised stage hyperparameters."""

    tau: float = 0.0866
    batch_size: int = 64
    epochs: int = 100
    lr: float = 0.0094
    weight_decay: float = 0.0343
    max_samples: int | None = None  # optional cap on the unlabeled pool

    def __post_init__(self) -> None:
        if self.tau <= 0:
            raise ValueError("temperature must be positive")
        if self.batch_size < 2:
            raise ValueError("batch_size must be at least 2")
        if self.epochs < 0 or self.lr < 0 or self.weight_decay < 0:
            raise ValueError("epochs, lr and weight_decay must be non-negative")
        if self.max_samples is not None and self.max_samples < self.batch_size:
            raise ValueError("max_samples must be at least batch_size")


@dataclass(frozen=True)
class FinetuneConfig:
    """Label-guided head-tuning hyperparameters."""

    tau: float = 0.0866
    label_threshold: float = 0.6  # label-distance radius for positives
    epochs: int = 100
    lr: float = 0.0051
    weight_decay: float = 0.0066

    def __post_init__(self) -> None:
        if self.tau <= 0:
            raise ValueError("temperature must be positive")
        if self.label_threshold <= 0:
            raise ValueError("label_threshold must be positive")
        if self.epochs < 0 or self.lr < 0 or self.weight_decay < 0:
            raise ValueError("epochs, lr and weight_decay must be non-negative")


class EpochRecord(NamedTuple):
    epoch: int
    mean_loss: float
    skipped_anchors: int


def magnitude_warp(
    spectrum: np.ndarray, cfg: AugmentationConfig, rng: np.random.Generator
) -> np.ndarray:
    """Scale, add band noise, and modulate by a smooth random curve.

    The curve is a natural cubic spline through ``num_knots`` values drawn
    around 1 at evenly spaced band positions.  Draw order is fixed
    (scale, noise, knots), so a given generator state always produces the
    same augmentation.
    """
    x = np.asarray(spectrum, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError(f"spectrum must be 1-D, got shape {x.shape}")
    if x.size < cfg.num_knots:
        raise ValueError(f"need at least {cfg.num_knots} bands, got {x.size}")
    alpha = rng.uniform(cfg.alpha_range[0], cfg.alpha_range[1])
    noise = rng.normal(0.0, cfg.sigma1, size=x.size)
    knots = rng.normal(1.0, cfg.sigma2, size=cfg.num_knots)
    positions = np.linspace(0.0, x.size - 1.0, cfg.num_knots)
    curve = CubicSpline(positions, knots, bc_type="natural")(np.arange(x.size))
    return curve * (alpha * x + noise)


def cosine_sim(u: np.ndarray, v: np.ndarray) -> float:
    """Cosine of the angle between two vectors; rejects near-zero norms."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if min(nu, nv) < NORM_FLOOR:
        raise ValueError("cosine similarity undefined for near-zero vectors")
    return float(np.dot(u, v) / (nu * nv))


def _normalize_rows(z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    norms = np.linalg.norm(z, axis=1)
    if norms.min() < NORM_FLOOR:
        raise ValueError("embedding rows must have norm above 1e-12")
    return z / norms[:, None], norms


def _project_row_gradient(d_unit: np.ndarray, unit: np.ndarray,
                          norms: np.ndarray) -> np.ndarray:
    """Convert gradients w.r.t. normalized rows into gradients w.r.t. raw rows."""
    radial = (d_unit * unit).sum(axis=1, keepdims=True)
    return (d_unit - radial * unit) / norms[:, None]


def simclr_loss(z: np.ndarray, tau: float) -> tuple[float, np.ndarray]:
    """Paired-view contrastive loss and its gradient.

    ``z`` stacks ``2B`` embeddings: originals in rows ``0..B-1`` and their
    augmented partners in rows ``B..2B-1``.  For each anchor the positive
    is its partner row and the denominator runs over every other row.
    Returns ``(loss, d_loss/d_z)``.
    """
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 2 or z.shape[0] < 2 or z.shape[0] % 2 != 0:
        raise ValueError(f"need an even stack of at least 2 embeddings, got {z.shape}")
    if tau <= 0:
        raise ValueError("temperature must be positive")
    n = z.shape[0]
    half = n // 2
    unit, norms = _normalize_rows(z)
    sim = unit @ unit.T
    exps = np.exp(sim / tau)
    np.fill_diagonal(exps, 0.0)
    denom = exps.sum(axis=1)
    pos = np.concatenate([np.arange(half) + half, np.arange(half)])
    rows = np.arange(n)
    loss = float(np.mean(np.log(denom) - sim[rows, pos] / tau))

    d_sim = exps / denom[:, None]  # softmax over non-diagonal entries
    d_sim[rows, pos] -= 1.0
    d_sim /= n * tau
    d_unit = (d_sim + d_sim.T) @ unit
    return loss, _project_row_gradient(d_unit, unit, norms)


def finetune_loss(
    z: np.ndarray, labels: np.ndarray, cfg: FinetuneConfig
) -> tuple[float, np.ndarray, int]:
    """Label-neighbourhood contrastive loss over one embedding batch.

    An anchor's positive set holds every *other* sample whose abundance
    label lies within ``cfg.label_threshold`` (Euclidean); the normalizer
    runs over all other samples.  Anchors with an empty positive set are
    skipped; their count is returned as the third element.

    Returns ``(loss, d_loss/d_z, skipped_anchor_count)``.
    """
    z = np.asarray(z, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if z.ndim != 2 or z.shape[0] < 2:
        raise ValueError(f"need at least 2 embeddings, got {z.shape}")
    if labels.shape != (z.shape[0], 3):
        raise ValueError(f"labels must be ({z.shape[0]}, 3), got {labels.shape}")
    n = z.shape[0]
    unit, norms = _normalize_rows(z)
    sim = unit @ unit.T
    exps = np.exp(sim / cfg.tau)
    np.fill_diagonal(exps, 0.0)

    label_dist = np.linalg.norm(labels[:, None, :] - labels[None, :, :], axis=2)
    positive = label_dist < cfg.label_threshold
    np.fill_diagonal(positive, False)

    numer = (exps * positive).sum(axis=1)
    denom = exps.sum(axis=1)
    active = numer > 0.0
    n_active = int(active.sum())
    skipped = n - n_active
    if n_active == 0:
        raise ValueError("every anchor has an empty positive set")
    loss = float(np.mean(np.log(denom[active]) - np.log(numer[active])))

    d_sim = np.zeros_like(sim)
    d_sim[active] = (
        exps[active] / denom[active, None]
        - (exps[active] * positive[active]) / numer[active, None]
    )
    d_sim /= n_active * cfg.tau
    d_unit = (d_sim + d_sim.T) @ unit
    return loss, _project_row_gradient(d_unit, unit, norms), skipped


def _batched(order: np.ndarray, size: int):
    for start in range(0, order.size, size):
        yield order[start:start + size]


def pretrain(
    model: EncoderModel,
    unlabeled: np.ndarray,
    cfg: PretrainConfig,
    aug: AugmentationConfig,
) -> list[EpochRecord]:
    """Self-supervised training of the full encoder (in place).

    Each step forwards a batch of originals and a batch of augmented
    partners, stacks both embeddings, and descends the paired-view loss
    with decoupled-weight-decay Adam.  All randomness (pool subsampling,
    epoch shuffles, per-sample augmentations) derives from ``aug.seed``.
    Trailing batch fragments of fewer than 2 samples are skipped.

    Returns one record per epoch with the mean step loss.
    """
    pool = np.asarray(unlabeled, dtype=np.float64)
    if pool.ndim != 2 or pool.shape[0] < cfg.batch_size:
        raise ValueError(
            f"need at least batch_size={cfg.batch_size} unlabeled spectra, "
            f"got {pool.shape}"
        )
    if not np.all(np.isfinite(pool)):
        raise ValueError("unlabeled spectra contain non-finite values")
    if cfg.max_samples is not None and pool.shape[0] > cfg.max_samples:
        keep = substream(aug.seed, "subsample").choice(
            pool.shape[0], size=cfg.max_samples, replace=False
        )
        pool = pool[np.sort(keep)]
    n = pool.shape[0]
    optimizer = AdamW(lr=cfg.lr, weight_decay=cfg.weight_decay)
    params = model.parameters()
    history: list[EpochRecord] = []
    for epoch in range(cfg.epochs):
        order = substream(aug.seed, "shuffle", epoch).permutation(n)
        losses = []
        for batch in _batched(order, cfg.batch_size):
            if batch.size < 2:
                continue
            originals = pool[batch][:, None, :]
            augmented = np.stack([
                magnitude_warp(pool[i], aug, substream(aug.seed, "augment", epoch, int(i)))
                for i in batch
            ])[:, None, :]
            out_orig = model.forward(originals, train=True)
            out_aug = model.forward(augmented, train=True)
            stacked = np.vstack([out_orig.embedding, out_aug.embedding])
            loss, d_stacked = simclr_loss(stacked, cfg.tau)
            grads_orig = model.backward(out_orig.cache, d_stacked[:batch.size])
            grads_aug = model.backward(out_aug.cache, d_stacked[batch.size:])
            grads = {k: grads_orig[k] + grads_aug[k] for k in grads_orig}
            optimizer.step(params, grads)
            losses.append(loss)
        history.append(EpochRecord(epoch, float(np.mean(losses)), 0))
    return history


def finetune(
    model: EncoderModel,
    spectra: np.ndarray,
    labels: np.ndarray,
    cfg: FinetuneConfig,
) -> list[EpochRecord]:
    """Label-guided tuning of the projection head only (in place).

    The convolutional trunk runs once in eval mode (sample by sample) to
    produce frozen latent features; every epoch then takes one full-batch
    head update.  Trunk parameters and batch-norm statistics are never
    touched.  The loop is deterministic: no randomness is consumed.
    """
    spectra = np.asarray(spectra, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if spectra.ndim != 2 or spectra.shape[0] < 2:
        raise ValueError(f"need at least 2 labeled spectra, got {spectra.shape}")
    if labels.shape != (spectra.shape[0], 3):
        raise ValueError(f"labels must be ({spectra.shape[0]}, 3), got {labels.shape}")
    latents = np.vstack([
        model.forward(spectra[i][None, None, :], train=False).latent
        for i in range(spectra.shape[0])
    ])
    optimizer = AdamW(lr=cfg.lr, weight_decay=cfg.weight_decay)
    params = model.head_parameters()
    history: list[EpochRecord] = []
    for epoch in range(cfg.epochs):
        embeddings, head_cache = model.head.forward(latents, train=True)
        loss, d_embeddings, skipped = finetune_loss(embeddings, labels, cfg)
        _, head_grads = model.head.backward(d_embeddings, head_cache)
        optimizer.step(
            params,
            {"head.weight": head_grads["weight"], "head.bias": head_grads["bias"]},
        )
        history.append(EpochRecord(epoch, loss, skipped))
    return history


def write_history_csv(path, history: list[EpochRecord]) -> None:
    """Write per-epoch training records as ``epoch,mean_loss,skipped_anchors``."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "mean_loss", "skipped_anchors"])
        for record in history:
            writer.writerow([
                record.epoch, f"{record.mean_loss:.10f}", record.skipped_anchors,
            ])


def read_history_csv(path) -> list[EpochRecord]:
    with open(path, "r", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["epoch", "mean_loss", "skipped_anchors"]:
            raise ValueError(f"{path}: unexpected history header {header}")
        return [EpochRecord(int(e), float(l), int(s)) for e, l, s in reader]

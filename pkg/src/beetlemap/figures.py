"""Matplotlib figures that accompany the delimited reports."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .contrastive import EpochRecord
from .data import CLASS_NAMES
from .pipeline import METHOD_FLOOR, REPORT_METHODS, CrossValResult

__all__ = ["save_loss_curves", "save_rmse_summary"]

_DPI = 120


def save_loss_curves(histories: dict[str, list[EpochRecord]], path) -> None:
    """Plot per-epoch mean loss for each named training stage."""
    if not histories:
        raise ValueError("need at least one history to plot")
    fig, ax = plt.subplots(figsize=(6.0, 3.6))
    for label, records in histories.items():
        if not records:
            continue
        epochs = [r.epoch for r in records]
        losses = [r.mean_loss for r in records]
        ax.plot(epochs, losses, marker=".", markersize=3, label=label)
    ax.set_xlabel("epoch")
    ax.set_ylabel("mean loss")
    ax.legend(frameon=False)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def save_rmse_summary(result: CrossValResult, path) -> None:
    """Grouped per-class RMSE bars per method, with the mean-label floor."""
    fig, ax = plt.subplots(figsize=(6.4, 3.6))
    n_methods = len(REPORT_METHODS)
    group_width = 0.8
    bar_width = group_width / n_methods
    x = np.arange(len(CLASS_NAMES) + 1)
    for m_idx, method in enumerate(REPORT_METHODS):
        means = result.class_means(method)
        values = [*means, result.grand_mean(method)]
        offsets = x - group_width / 2 + (m_idx + 0.5) * bar_width
        ax.bar(offsets, values, width=bar_width, label=method)
    ax.axhline(
        result.grand_mean(METHOD_FLOOR),
        color="black",
        linestyle="--",
        linewidth=1,
        label="mean-label floor",
    )
    ax.set_xticks(x)
    ax.set_xticklabels([*CLASS_NAMES, "mean"])
    ax.set_ylabel("RMSE")
    ax.legend(frameon=False, fontsize=8)
    ax.grid(axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)

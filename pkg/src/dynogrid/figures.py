"""Figure rendering for the report paths: metric sweeps, per-frame recall
timelines, training curves. Everything is written to files through the Agg
backend so headless runs produce byte-stable PNGs next to the delimited
output."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .evaluate import ExperimentResult


def save_metric_figure(result: ExperimentResult, path) -> None:
    """Precision, recall and F1 versus distance threshold, one line per
    configuration."""
    fig, axes = plt.subplots(1, 3, figsize=(10.5, 3.2), sharex=True)
    names = ("precision", "recall", "f1")
    for ax, name in zip(axes, names):
        for ablation in result.ablations:
            xs = list(result.sweep)
            ys = [getattr(result.metrics[ablation][s], name) for s in xs]
            ys = [np.nan if v is None else v for v in ys]
            ax.plot(xs, ys, marker="o", label=ablation)
        ax.set_xlabel("distThresh (m)")
        ax.set_ylabel(name)
        ax.set_ylim(-0.02, 1.02)
        ax.grid(True, alpha=0.4)
    axes[0].legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def save_timeline_figure(result: ExperimentResult, path, dist_thresh: float | None = None, window: int = 10) -> None:
    """Rolling per-frame recall at one threshold for each configuration."""
    s = dist_thresh if dist_thresh is not None else result.sweep[len(result.sweep) // 2]
    fig, ax = plt.subplots(figsize=(7.5, 3.0))
    for ablation in result.ablations:
        tl = result.timeline[ablation][s]
        if not tl:
            continue
        t = np.array([row[0] for row in tl])
        rec = np.array([row[1].tp / max(row[1].tp + row[1].fn, 1) for row in tl])
        k = min(window, len(rec))
        kernel = np.ones(k) / k
        smooth = np.convolve(rec, kernel, mode="same")
        ax.plot(t, smooth, label=ablation)
    ax.set_xlabel("time (s)")
    ax.set_ylabel(f"recall (rolling, distThresh={s:g} m)")
    ax.set_ylim(-0.05, 1.05)
    ax.grid(True, alpha=0.4)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def save_loss_figure(history: dict, path) -> None:
    """Train/validation loss and validation IoU per epoch."""
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(8.5, 3.0))
    ax1.plot(history["epoch"], history["train_loss"], label="train")
    if any(np.isfinite(history["val_loss"])):
        ax1.plot(history["epoch"], history["val_loss"], label="val")
    ax1.set_xlabel("epoch")
    ax1.set_ylabel("loss")
    ax1.grid(True, alpha=0.4)
    ax1.legend(fontsize=8)
    ax2.plot(history["epoch"], history["val_iou"], color="tab:green")
    ax2.set_xlabel("epoch")
    ax2.set_ylabel("val IoU")
    ax2.set_ylim(-0.02, 1.02)
    ax2.grid(True, alpha=0.4)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def save_grid_figure(probs: np.ndarray, path, title: str = "") -> None:
    """Debug view of one BEV grid (probability per column)."""
    fig, ax = plt.subplots(figsize=(4.0, 3.6))
    im = ax.imshow(np.asarray(probs).T, origin="lower", vmin=0.0, vmax=1.0, cmap="viridis")
    ax.set_xlabel("x cell")
    ax.set_ylabel("y cell")
    if title:
        ax.set_title(title, fontsize=9)
    fig.colorbar(im, ax=ax, shrink=0.85)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)

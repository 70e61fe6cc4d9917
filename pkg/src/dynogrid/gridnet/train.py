"""Training loop for the dynamic-grid model: plain gradient descent with
momentum over single-sample windows, deterministic under a pinned seed.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..core import to_world
from ..grids import PillarSpec
from ..simworld import FrameRecord, rasterize_target_grid
from .losses import (
    DEFAULT_BCE_WEIGHT,
    DEFAULT_DICE_WEIGHT,
    DEFAULT_POSITIVE_WEIGHT,
    bev_iou,
    total_loss,
)
from .model import GridNetModel, PillarData, build_pillars


class TrainingDivergence(RuntimeError):
    """Raised when the loss blows past the divergence guard."""


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 20
    learning_rate: float = 0.02
    momentum: float = 0.9
    seed: int = 0
    val_fraction: float = 0.2
    positive_weight: float = DEFAULT_POSITIVE_WEIGHT
    w_bce: float = DEFAULT_BCE_WEIGHT
    w_dice: float = DEFAULT_DICE_WEIGHT
    divergence_factor: float = 10.0

    def to_dict(self) -> dict:
        return {
            "epochs": self.epochs,
            "learning_rate": self.learning_rate,
            "momentum": self.momentum,
            "seed": self.seed,
            "val_fraction": self.val_fraction,
            "positive_weight": self.positive_weight,
            "w_bce": self.w_bce,
            "w_dice": self.w_dice,
            "divergence_factor": self.divergence_factor,
        }

    @staticmethod
    def from_dict(d: dict) -> "TrainConfig":
        base = TrainConfig()
        return TrainConfig(**{k: type(getattr(base, k))(v) for k, v in d.items() if hasattr(base, k)})


@dataclass
class GridSample:
    """One training window: precomputed pillar data for T consecutive scans,
    their body-frame velocities, and the binary target at the window end."""

    pillars: list[PillarData]
    velocities: np.ndarray  # (T, 3)
    target: np.ndarray  # (n, n) binary
    stamp: float = 0.0


def build_window_dataset(
    frames: Sequence[FrameRecord], spec: PillarSpec, history: int, stride: int = 1
) -> list[GridSample]:
    """Sliding windows of `history` consecutive frames, advancing `stride`
    frames between windows; the target grid is the rasterized dynamic ground
    truth at the last frame of each window."""
    samples = []
    for end in range(history - 1, len(frames), stride):
        window = frames[end - history + 1 : end + 1]
        pillars = [build_pillars(to_world(f.scan), spec) for f in window]
        vels = np.stack([f.scan.ego.body_velocity for f in window])
        target = rasterize_target_grid(window[-1].ground_truth, spec, stamp=window[-1].scan.stamp)
        samples.append(
            GridSample(pillars=pillars, velocities=vels, target=target.probs, stamp=window[-1].scan.stamp)
        )
    return samples


def _sample_loss_tensor(model: GridNetModel, sample: GridSample, cfg: TrainConfig):
    probs = model.forward_tensor([None] * model.config.history, sample.velocities, pillars=sample.pillars)
    return probs, total_loss(
        probs, sample.target, w_bce=cfg.w_bce, w_dice=cfg.w_dice, positive_weight=cfg.positive_weight
    )


def evaluate_loss(model: GridNetModel, samples: Sequence[GridSample], cfg: TrainConfig) -> tuple[float, float]:
    """Mean loss and aggregate BEV IoU over a sample set, without gradients."""
    if not samples:
        return float("nan"), float("nan")
    losses = []
    inter_total = 0
    union_total = 0
    for s in samples:
        probs, loss = _sample_loss_tensor(model, s, cfg)
        losses.append(loss.item())
        inter, union = bev_iou(probs.data, s.target)
        inter_total += inter
        union_total += union
    iou = 1.0 if union_total == 0 else inter_total / union_total
    return float(np.mean(losses)), iou


def split_samples(samples: Sequence[GridSample], cfg: TrainConfig) -> tuple[list, list]:
    rng = np.random.default_rng(cfg.seed)
    order = rng.permutation(len(samples))
    n_val = int(round(len(samples) * cfg.val_fraction))
    val_idx = set(order[:n_val].tolist())
    train = [samples[i] for i in range(len(samples)) if i not in val_idx]
    val = [samples[i] for i in sorted(val_idx)]
    return train, val


def train(model: GridNetModel, samples: Sequence[GridSample], cfg: TrainConfig) -> dict:
    """Momentum SGD over the samples for cfg.epochs. Returns a history dict
    with per-epoch train/val loss and val IoU; raises TrainingDivergence if
    the train loss exceeds divergence_factor times its initial value."""
    train_set, val_set = split_samples(samples, cfg)
    if not train_set:
        raise ValueError("no training samples")
    rng = np.random.default_rng(cfg.seed + 1)
    velocity = {name: np.zeros_like(p.data) for name, p in model.params.items()}
    history = {"epoch": [], "train_loss": [], "val_loss": [], "val_iou": []}
    initial_loss, _ = evaluate_loss(model, train_set, cfg)
    if not np.isfinite(initial_loss):
        raise TrainingDivergence("non-finite loss before training")
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(train_set))
        epoch_losses = []
        for i in order:
            sample = train_set[i]
            model.zero_grad()
            _, loss = _sample_loss_tensor(model, sample, cfg)
            loss_val = loss.item()
            if not np.isfinite(loss_val):
                raise TrainingDivergence(f"non-finite loss at epoch {epoch}")
            loss.backward()
            for name, p in model.params.items():
                g = p.grad
                if g is None:
                    continue
                v = velocity[name]
                v *= cfg.momentum
                v += g
                p.data = p.data - cfg.learning_rate * v
            epoch_losses.append(loss_val)
        train_loss = float(np.mean(epoch_losses))
        if train_loss > cfg.divergence_factor * max(initial_loss, 1e-12):
            raise TrainingDivergence(
                f"train loss {train_loss:.4g} exceeded {cfg.divergence_factor}x initial {initial_loss:.4g}"
            )
        val_loss, val_iou = evaluate_loss(model, val_set, cfg)
        history["epoch"].append(epoch)
        history["train_loss"].append(train_loss)
        history["val_loss"].append(val_loss)
        history["val_iou"].append(val_iou)
    return history


def smoothed(values: Sequence[float], window: int = 3) -> np.ndarray:
    """Trailing moving average used for the loss-decrease check."""
    v = np.asarray(values, dtype=np.float64)
    out = np.empty_like(v)
    for i in range(len(v)):
        out[i] = v[max(0, i - window + 1) : i + 1].mean()
    return out


def write_history_csv(history: dict, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_loss", "val_loss", "val_iou"])
        for i in range(len(history["epoch"])):
            writer.writerow(
                [
                    history["epoch"][i],
                    repr(history["train_loss"][i]),
                    repr(history["val_loss"][i]),
                    repr(history["val_iou"][i]),
                ]
            )


def shuffle_targets(samples: Sequence[GridSample], seed: int) -> list[GridSample]:
    """Control set: targets permuted across samples so inputs carry no signal
    about their labels."""
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(samples))
    return [
        GridSample(pillars=s.pillars, velocities=s.velocities, target=samples[j].target, stamp=s.stamp)
        for s, j in zip(samples, perm)
    ]


def background_prior_baseline(
    train_samples: Sequence[GridSample], val_samples: Sequence[GridSample], cfg: TrainConfig
) -> tuple[np.ndarray, float]:
    """Validation loss of the strongest predictor that ignores its inputs: a
    fixed per-cell probability map fit on the training targets. Per cell the
    weighted-BCE optimum is w*r/(w*r + 1 - r) for positive rate r; rates are
    smoothed toward the global rate so unseen cells are covered, and constant
    maps plus global scalings compete on the training loss. Returns
    (map, val_loss)."""
    w = cfg.positive_weight
    rate = np.mean([s.target for s in train_samples], axis=0)
    n = len(train_samples)
    global_rate = float(rate.mean())
    smoothed_rate = (rate * n + global_rate) / (n + 1.0)

    def bce_optimal(r):
        return w * r / (w * r + (1.0 - r))

    def mean_loss(p_map, samples):
        return float(
            np.mean(
                [
                    total_loss(p_map, s.target, w_bce=cfg.w_bce, w_dice=cfg.w_dice, positive_weight=w)
                    for s in samples
                ]
            )
        )

    candidates = [bce_optimal(smoothed_rate)]
    for alpha in np.linspace(0.25, 2.0, 8):
        candidates.append(np.clip(alpha * bce_optimal(smoothed_rate), 0.0, 1.0))
    for const in np.geomspace(1e-3, 0.9, 12):
        candidates.append(np.full_like(rate, const))
    candidates.append(np.full_like(rate, bce_optimal(global_rate)))

    best_map, best_train = None, np.inf
    for cand in candidates:
        m = mean_loss(cand, train_samples)
        if m < best_train:
            best_train, best_map = m, cand
    return best_map, mean_loss(best_map, val_samples)

"""Losses for the heavily class-imbalanced dynamic-grid segmentation task:
positive-weighted binary cross entropy plus a soft Dice overlap term.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

BCE_EPS = 1e-7
DICE_SMOOTH = 1.0
DEFAULT_POSITIVE_WEIGHT = 5.0
DEFAULT_BCE_WEIGHT = 0.7
DEFAULT_DICE_WEIGHT = 0.3


def _as_pair(probs, targets):
    p = probs if isinstance(probs, Tensor) else Tensor(np.asarray(probs, dtype=np.float64))
    y = np.asarray(targets.data if isinstance(targets, Tensor) else targets, dtype=np.float64)
    if p.data.shape != y.shape:
        raise ValueError(f"probs shape {p.data.shape} != targets shape {y.shape}")
    return p, y


def weighted_bce(probs, targets, w: float = DEFAULT_POSITIVE_WEIGHT):
    """Mean of -w*y*log(p) - (1-y)*log(1-p) with p clamped to
    [BCE_EPS, 1-BCE_EPS]. `w` scales the positive-label term to counter the
    rarity of dynamic cells. Returns a Tensor when given one, else a float."""
    p, y = _as_pair(probs, targets)
    pc = ad.clip(p, BCE_EPS, 1.0 - BCE_EPS)
    pos = Tensor(-w * y) * ad.log(pc)
    negt = Tensor(-(1.0 - y)) * ad.log(1.0 - pc)
    loss = ad.tmean(pos + negt)
    return loss if isinstance(probs, Tensor) else loss.item()


def dice_loss(probs, targets):
    """1 - soft Dice score, smoothed so the empty-prediction/empty-target case
    scores 0 loss. Lies in [0, 1]."""
    p, y = _as_pair(probs, targets)
    yt = Tensor(y)
    inter = ad.tsum(p * yt)
    denom = ad.tsum(p) + float(y.sum())
    score = (2.0 * inter + DICE_SMOOTH) / (denom + DICE_SMOOTH)
    loss = 1.0 - score
    return loss if isinstance(probs, Tensor) else loss.item()


def total_loss(
    probs,
    targets,
    w_bce: float = DEFAULT_BCE_WEIGHT,
    w_dice: float = DEFAULT_DICE_WEIGHT,
    positive_weight: float = DEFAULT_POSITIVE_WEIGHT,
):
    """Weighted sum w_bce * BCE + w_dice * Dice."""
    bce = weighted_bce(probs, targets, w=positive_weight)
    dce = dice_loss(probs, targets)
    if isinstance(probs, Tensor):
        return Tensor(np.asarray(w_bce)) * bce + Tensor(np.asarray(w_dice)) * dce
    return w_bce * bce + w_dice * dce


def bev_iou(probs: np.ndarray, targets: np.ndarray, threshold: float = 0.5) -> tuple[int, int]:
    """Intersection and union cell counts of the thresholded prediction
    against a binary target; callers aggregate across frames."""
    pred = np.asarray(probs) > threshold
    tgt = np.asarray(targets) > 0.5
    inter = int((pred & tgt).sum())
    union = int((pred | tgt).sum())
    return inter, union

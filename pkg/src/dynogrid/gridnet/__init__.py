"""Learned BEV dynamic-grid pipeline: pillar encoding, conv compression,
velocity embedding, LSTM temporal modeling, conv decoding, and training, all
on a self-contained reverse-mode differentiation engine."""

from ..grids import Detection2D, DynamicGrid, PillarSpec, extract_detections_2d
from .losses import bev_iou, dice_loss, total_loss, weighted_bce
from .model import (
    GridNetConfig,
    GridNetModel,
    PillarData,
    build_pillars,
    encode_pillars,
    forward,
    load_weights,
    save_weights,
)
from .train import (
    GridSample,
    TrainConfig,
    TrainingDivergence,
    build_window_dataset,
    train,
)

__all__ = [
    "Detection2D",
    "DynamicGrid",
    "PillarSpec",
    "extract_detections_2d",
    "bev_iou",
    "dice_loss",
    "total_loss",
    "weighted_bce",
    "GridNetConfig",
    "GridNetModel",
    "PillarData",
    "build_pillars",
    "encode_pillars",
    "forward",
    "load_weights",
    "save_weights",
    "GridSample",
    "TrainConfig",
    "TrainingDivergence",
    "build_window_dataset",
    "train",
]

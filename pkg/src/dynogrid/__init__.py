"""LiDAR dynamic obstacle detection: temporal occupancy-grid motion
segmentation, Dubins-model EKF tracking, a learned BEV dynamic grid, and
detection fusion, plus a synthetic LiDAR simulator and evaluation harness."""

__version__ = "0.1.0"

from .cluster import ClusterConfig, Detection3D, detect_objects, euclidean_cluster
from .core import EgoState, GroundTruthObstacle, PointCloudScan, Timestamp, to_world
from .fusion import FusionConfig, FusionReport, fuse_detections, greedy_match
from .grids import Detection2D, DynamicGrid, PillarSpec, extract_detections_2d
from .ogm import OgmConfig, TemporalVoxelGrid, traverse_ray
from .pipeline import DetectionPipeline, PipelineConfig
from .simworld import (
    FrameRecord,
    LidarSpec,
    Scene,
    SceneConfig,
    build_scene,
    cast_scan,
    rasterize_target_grid,
    read_dataset,
    write_dataset,
)
from .tracker import NoiseParams, TrackEstimate, TrackState, spawn_track

__all__ = [
    "__version__",
    "ClusterConfig",
    "Detection3D",
    "detect_objects",
    "euclidean_cluster",
    "EgoState",
    "GroundTruthObstacle",
    "PointCloudScan",
    "Timestamp",
    "to_world",
    "FusionConfig",
    "FusionReport",
    "fuse_detections",
    "greedy_match",
    "Detection2D",
    "DynamicGrid",
    "PillarSpec",
    "extract_detections_2d",
    "OgmConfig",
    "TemporalVoxelGrid",
    "traverse_ray",
    "DetectionPipeline",
    "PipelineConfig",
    "FrameRecord",
    "LidarSpec",
    "Scene",
    "SceneConfig",
    "build_scene",
    "cast_scan",
    "rasterize_target_grid",
    "read_dataset",
    "write_dataset",
    "NoiseParams",
    "TrackEstimate",
    "TrackState",
    "spawn_track",
]

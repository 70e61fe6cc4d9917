"""Shared geometric and temporal domain types.

World frame is the simulator's fixed frame; occupancy grids and track state
live in world coordinates. Quaternions are stored scalar-last (x, y, z, w),
body-to-world, and are normalized on construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# Seconds since dataset epoch. Scan streams carry strictly increasing stamps;
# the nominal frame period is 0.1 s (10 Hz sensor).
Timestamp = float

QUAT_NORM_TOL = 1e-6


def _as_vec3(v) -> np.ndarray:
    a = np.asarray(v, dtype=np.float64).reshape(3)
    return a


def normalize_quaternion(q) -> np.ndarray:
    """Validate and renormalize a scalar-last quaternion.

    Raises ValueError if the norm deviates from 1 by more than QUAT_NORM_TOL;
    smaller drift is silently renormalized.
    """
    q = np.asarray(q, dtype=np.float64).reshape(4)
    n = float(np.linalg.norm(q))
    if abs(n - 1.0) > QUAT_NORM_TOL:
        raise ValueError(f"quaternion norm {n:.6g} is not 1 within {QUAT_NORM_TOL:g}")
    return q / n


def quaternion_to_matrix(q) -> np.ndarray:
    """Rotation matrix for a unit quaternion (x, y, z, w), body to world."""
    x, y, z, w = normalize_quaternion(q)
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
            [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
            [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
        ],
        dtype=np.float64,
    )


def yaw_quaternion(yaw_rad: float) -> np.ndarray:
    """Quaternion for a pure rotation about the world z axis."""
    return np.array([0.0, 0.0, np.sin(yaw_rad / 2.0), np.cos(yaw_rad / 2.0)])


@dataclass(frozen=True)
class EgoState:
    """Sensor carrier pose and body-frame velocity.

    position : (3,) meters, world frame
    quaternion : (4,) scalar-last unit quaternion, body to world
    body_velocity : (3,) m/s in the body frame
    """

    position: np.ndarray
    quaternion: np.ndarray
    body_velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        object.__setattr__(self, "position", _as_vec3(self.position))
        object.__setattr__(self, "quaternion", normalize_quaternion(self.quaternion))
        object.__setattr__(self, "body_velocity", _as_vec3(self.body_velocity))

    def rotation(self) -> np.ndarray:
        return quaternion_to_matrix(self.quaternion)


@dataclass(frozen=True)
class PointCloudScan:
    """One LiDAR sweep: sensor-frame points plus the ego state at the stamp.

    Scans are treated as instantaneous at `stamp`; no intra-sweep motion
    compensation is applied.
    """

    stamp: Timestamp
    points: np.ndarray  # (N, 3) meters, sensor frame
    ego: EgoState

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.size == 0:
            pts = pts.reshape(0, 3)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise ValueError(f"points must have shape (N, 3), got {pts.shape}")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "stamp", float(self.stamp))


@dataclass(frozen=True)
class GroundTruthObstacle:
    """Reference state of one dynamic obstacle: a point position with a
    footprint radius used for target-grid rasterization."""

    id: str
    position: np.ndarray  # (3,) world frame
    radius: float
    is_dynamic: bool = True

    def __post_init__(self):
        object.__setattr__(self, "position", _as_vec3(self.position))
        if self.radius <= 0:
            raise ValueError("obstacle radius must be > 0")


def to_world(scan: PointCloudScan) -> np.ndarray:
    """Transform every scan point from the sensor frame to the world frame."""
    R = scan.ego.rotation()
    return scan.points @ R.T + scan.ego.position


def world_to_sensor(points_world: np.ndarray, ego: EgoState) -> np.ndarray:
    """Inverse of to_world for an (N, 3) array of world-frame points."""
    R = ego.rotation()
    return (np.asarray(points_world, dtype=np.float64) - ego.position) @ R


def body_to_world_velocity(ego: EgoState) -> np.ndarray:
    """Rotate the ego body-frame velocity into the world frame."""
    return ego.rotation() @ ego.body_velocity

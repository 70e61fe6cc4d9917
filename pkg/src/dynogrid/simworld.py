"""Synthetic indoor LiDAR world: scene construction, ray-cast scan generation
with ground truth, and dataset record/replay.

Scenes live in a rectangular room whose interior walls, floor and ceiling
return LiDAR hits. Static obstacles are axis-aligned boxes and vertical
cylinders; dynamic obstacles are rigid boxes or cylinders carried along
piecewise-linear waypoint trajectories at per-segment speeds.

Scene config files are JSON with a top-level "version" field::

    {
      "version": 1,
      "room": {"min": [x, y, z], "max": [x, y, z]},
      "static_obstacles": [
        {"shape": "box", "min": [...], "max": [...]},
        {"shape": "cylinder", "center": [x, y], "radius": r,
         "zmin": z0, "zmax": z1}
      ],
      "dynamic_obstacles": [
        {"name": "walker-0", "shape": "cylinder", "radius": 0.3,
         "height": 1.7, "waypoints": [[x, y, z], ...],
         "speeds": [s0, ...],            # one per segment, m/s
         "gt_radius": 0.3,               # optional, defaults to footprint
         "start_time": 0.0}              # optional presence window
      ],
      "ego": {"waypoints": [[x, y, z]], "speeds": [], "yaw_deg": 0.0},
      "lidar": {"rate_hz": 10.0, "azimuth_count": 360,
                "elevation_angles_deg": [...], "max_range_m": 11.0,
                "range_noise_sigma_m": 0.0, "max_points": 20000}
    }

Dataset files are line-delimited JSON: one header object, then one frame
object per line with fixed field order. Floats are printed with Python's
shortest round-trip representation, so read(write(x)) reproduces every field
bit-exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from .core import (
    EgoState,
    GroundTruthObstacle,
    PointCloudScan,
    Timestamp,
    world_to_sensor,
    yaw_quaternion,
)
from .grids import DynamicGrid, PillarSpec

DATASET_FORMAT = "dynogrid.frames"
DATASET_VERSION = 1
SCENE_VERSION = 1


class SceneConfigError(ValueError):
    """Raised when a scene description violates its invariants."""


class DatasetError(ValueError):
    """Raised on malformed dataset files; carries the offending line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(message if line is None else f"line {line}: {message}")


# ---------------------------------------------------------------------------
# geometry primitives


@dataclass(frozen=True)
class Box:
    minimum: np.ndarray
    maximum: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "minimum", np.asarray(self.minimum, dtype=np.float64).reshape(3))
        object.__setattr__(self, "maximum", np.asarray(self.maximum, dtype=np.float64).reshape(3))
        if not np.all(self.maximum > self.minimum):
            raise SceneConfigError("box max must exceed min on every axis")

    def contains(self, p: np.ndarray, margin: float = 0.0) -> bool:
        p = np.asarray(p)
        return bool(np.all(p >= self.minimum - margin) and np.all(p <= self.maximum + margin))


@dataclass(frozen=True)
class Cylinder:
    """Vertical cylinder: circular footprint in xy between two z planes."""

    center: np.ndarray  # (2,) x, y
    radius: float
    zmin: float
    zmax: float

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=np.float64).reshape(2))
        if self.radius <= 0 or self.zmax <= self.zmin:
            raise SceneConfigError("cylinder needs radius > 0 and zmax > zmin")

    def contains(self, p: np.ndarray, margin: float = 0.0) -> bool:
        p = np.asarray(p)
        dxy = np.hypot(p[0] - self.center[0], p[1] - self.center[1])
        return bool(dxy <= self.radius + margin and self.zmin - margin <= p[2] <= self.zmax + margin)


_INF = np.inf


def _ray_box_window(origin: np.ndarray, dirs: np.ndarray, box: Box) -> tuple[np.ndarray, np.ndarray]:
    """Slab-method entry/exit parameters for each ray; (t_near, t_far)."""
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / dirs
        t0 = (box.minimum - origin) * inv
        t1 = (box.maximum - origin) * inv
    lo = np.minimum(t0, t1)
    hi = np.maximum(t0, t1)
    # Rays parallel to a slab: inside contributes (-inf, inf), outside misses.
    par = dirs == 0.0
    if par.any():
        inside = (origin >= box.minimum) & (origin <= box.maximum)
        lo = np.where(par, np.where(inside, -_INF, _INF), lo)
        hi = np.where(par, np.where(inside, _INF, -_INF), hi)
    t_near = lo.max(axis=1)
    t_far = hi.min(axis=1)
    return t_near, t_far


def ray_box_hit(origin: np.ndarray, dirs: np.ndarray, box: Box) -> np.ndarray:
    """Distance to the first surface of the box from outside; inf on miss."""
    t_near, t_far = _ray_box_window(origin, dirs, box)
    hit = (t_near <= t_far) & (t_far > 0)
    t = np.where(t_near > 0, t_near, t_far)  # origin inside: exit face
    return np.where(hit, t, _INF)


def ray_box_exit(origin: np.ndarray, dirs: np.ndarray, box: Box) -> np.ndarray:
    """Distance to the box walls from an origin inside it (room interior)."""
    _, t_far = _ray_box_window(origin, dirs, box)
    return np.where(t_far > 0, t_far, _INF)


def ray_cylinder_hit(origin: np.ndarray, dirs: np.ndarray, cyl: Cylinder) -> np.ndarray:
    """Nearest positive intersection with the cylinder side or end caps."""
    n = dirs.shape[0]
    best = np.full(n, _INF)

    ox, oy, oz = origin
    dx, dy, dz = dirs[:, 0], dirs[:, 1], dirs[:, 2]
    cx, cy = cyl.center
    fx, fy = ox - cx, oy - cy

    a = dx * dx + dy * dy
    b = 2.0 * (fx * dx + fy * dy)
    c = fx * fx + fy * fy - cyl.radius**2
    disc = b * b - 4.0 * a * c
    valid = (a > 0) & (disc >= 0)
    sq = np.sqrt(np.where(valid, disc, 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = (-b - sq) / (2.0 * a)
        t2 = (-b + sq) / (2.0 * a)
    for t in (t1, t2):
        z = oz + t * dz
        ok = valid & (t > 0) & (z >= cyl.zmin) & (z <= cyl.zmax)
        best = np.where(ok & (t < best), t, best)

    # End caps.
    for zc in (cyl.zmin, cyl.zmax):
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.where(dz != 0, (zc - oz) / np.where(dz != 0, dz, 1.0), -1.0)
        px, py = ox + t * dx, oy + t * dy
        ok = (t > 0) & ((px - cx) ** 2 + (py - cy) ** 2 <= cyl.radius**2)
        best = np.where(ok & (t < best), t, best)
    return best


# ---------------------------------------------------------------------------
# trajectories and obstacle specs


@dataclass(frozen=True)
class Trajectory:
    """Piecewise-linear waypoint path traversed at per-segment speeds.

    Before t=0 the path holds the first waypoint, after its duration the
    last. A single waypoint means a stationary object.
    """

    waypoints: np.ndarray  # (M, 3)
    speeds: np.ndarray  # (M-1,)

    def __post_init__(self):
        wp = np.asarray(self.waypoints, dtype=np.float64).reshape(-1, 3)
        sp = np.asarray(self.speeds, dtype=np.float64).reshape(-1)
        if wp.shape[0] < 1:
            raise SceneConfigError("trajectory needs at least one waypoint")
        if sp.shape[0] != wp.shape[0] - 1:
            raise SceneConfigError("need exactly one speed per segment")
        if np.any(sp < 0):
            raise SceneConfigError("segment speeds must be >= 0")
        seg = np.linalg.norm(np.diff(wp, axis=0), axis=1)
        if np.any((seg > 0) & (sp == 0)):
            raise SceneConfigError("zero speed on a segment of nonzero length")
        durations = np.where(seg > 0, seg / np.where(sp > 0, sp, 1.0), 0.0)
        object.__setattr__(self, "waypoints", wp)
        object.__setattr__(self, "speeds", sp)
        object.__setattr__(self, "_durations", durations)
        object.__setattr__(self, "_cum", np.concatenate([[0.0], np.cumsum(durations)]))

    @property
    def duration(self) -> float:
        return float(self._cum[-1])

    def position(self, t: float) -> np.ndarray:
        cum = self._cum
        if t <= 0 or len(self.waypoints) == 1:
            return self.waypoints[0].copy()
        if t >= cum[-1]:
            return self.waypoints[-1].copy()
        k = int(np.searchsorted(cum, t, side="right") - 1)
        k = min(k, len(self.waypoints) - 2)
        dur = self._durations[k]
        frac = 0.0 if dur == 0 else (t - cum[k]) / dur
        return self.waypoints[k] + frac * (self.waypoints[k + 1] - self.waypoints[k])

    def velocity(self, t: float) -> np.ndarray:
        cum = self._cum
        if len(self.waypoints) == 1 or t < 0 or t >= cum[-1]:
            return np.zeros(3)
        k = int(np.searchsorted(cum, t, side="right") - 1)
        k = min(k, len(self.waypoints) - 2)
        seg = self.waypoints[k + 1] - self.waypoints[k]
        norm = np.linalg.norm(seg)
        if norm == 0:
            return np.zeros(3)
        return seg / norm * self.speeds[k]


@dataclass(frozen=True)
class DynamicObstacleSpec:
    """A rigid moving shape. `shape` is "cylinder" (radius, height) or "box"
    (extents). The trajectory waypoint is the shape center; cylinders extend
    height/2 above and below it."""

    name: str
    shape: str
    trajectory: Trajectory
    radius: float = 0.0
    height: float = 0.0
    extents: np.ndarray | None = None
    gt_radius: float | None = None
    start_time: float = 0.0
    end_time: float = np.inf

    def __post_init__(self):
        if self.shape not in ("cylinder", "box"):
            raise SceneConfigError(f"unknown dynamic shape {self.shape!r}")
        if self.shape == "cylinder" and (self.radius <= 0 or self.height <= 0):
            raise SceneConfigError("cylinder obstacle needs radius > 0 and height > 0")
        if self.shape == "box":
            if self.extents is None:
                raise SceneConfigError("box obstacle needs extents")
            object.__setattr__(self, "extents", np.asarray(self.extents, dtype=np.float64).reshape(3))

    def footprint_radius(self) -> float:
        if self.gt_radius is not None:
            return self.gt_radius
        if self.shape == "cylinder":
            return self.radius
        return float(np.hypot(self.extents[0], self.extents[1]) / 2.0)

    def present(self, t: float) -> bool:
        return self.start_time <= t <= self.end_time

    def primitive_at(self, t: float):
        p = self.trajectory.position(t)
        if self.shape == "cylinder":
            return Cylinder(center=p[:2], radius=self.radius, zmin=p[2] - self.height / 2.0, zmax=p[2] + self.height / 2.0)
        half = self.extents / 2.0
        return Box(minimum=p - half, maximum=p + half)


def walker_preset(name: str, waypoints, speed: float = 1.0) -> DynamicObstacleSpec:
    """Slow pedestrian analog: 0.3 m radius, 1.7 m tall cylinder, 0.5-1.5 m/s."""
    if not 0.5 <= speed <= 1.5:
        raise SceneConfigError("walker preset speed must lie in [0.5, 1.5] m/s")
    wp = np.asarray(waypoints, dtype=np.float64).reshape(-1, 3)
    return DynamicObstacleSpec(
        name=name,
        shape="cylinder",
        radius=0.3,
        height=1.7,
        trajectory=Trajectory(wp, np.full(max(len(wp) - 1, 0), speed)),
    )


def flyer_preset(name: str, waypoints, speeds) -> DynamicObstacleSpec:
    """Small fast flyer analog: 0.25 m radius, 0.3 m tall, up to 5 m/s."""
    wp = np.asarray(waypoints, dtype=np.float64).reshape(-1, 3)
    sp = np.asarray(speeds, dtype=np.float64).reshape(-1)
    if np.any(sp > 5.0):
        raise SceneConfigError("flyer preset speed must not exceed 5 m/s")
    return DynamicObstacleSpec(
        name=name, shape="cylinder", radius=0.25, height=0.3, trajectory=Trajectory(wp, sp)
    )


# ---------------------------------------------------------------------------
# lidar and scene


@dataclass(frozen=True)
class LidarSpec:
    rate_hz: float = 10.0
    azimuth_count: int = 360
    elevation_angles_deg: tuple = tuple(np.linspace(-7.0, 52.0, 16))
    max_range_m: float = 11.0
    range_noise_sigma_m: float = 0.0
    max_points: int = 20000

    def __post_init__(self):
        object.__setattr__(self, "elevation_angles_deg", tuple(float(e) for e in self.elevation_angles_deg))
        if self.azimuth_count < 1 or self.max_range_m <= 0 or self.rate_hz <= 0:
            raise SceneConfigError("lidar spec needs positive azimuth count, range and rate")

    def ray_directions(self) -> np.ndarray:
        """Unit ray directions in the sensor frame, elevation-major order."""
        az = np.arange(self.azimuth_count) * (2.0 * np.pi / self.azimuth_count)
        el = np.deg2rad(np.asarray(self.elevation_angles_deg))
        ca, sa = np.cos(az), np.sin(az)
        ce, se = np.cos(el), np.sin(el)
        dirs = np.empty((len(el) * len(az), 3))
        for i in range(len(el)):
            rows = slice(i * len(az), (i + 1) * len(az))
            dirs[rows, 0] = ce[i] * ca
            dirs[rows, 1] = ce[i] * sa
            dirs[rows, 2] = se[i]
        return dirs

    def to_dict(self) -> dict:
        return {
            "rate_hz": self.rate_hz,
            "azimuth_count": self.azimuth_count,
            "elevation_angles_deg": list(self.elevation_angles_deg),
            "max_range_m": self.max_range_m,
            "range_noise_sigma_m": self.range_noise_sigma_m,
            "max_points": self.max_points,
        }

    @staticmethod
    def from_dict(d: dict) -> "LidarSpec":
        return LidarSpec(
            rate_hz=float(d.get("rate_hz", 10.0)),
            azimuth_count=int(d.get("azimuth_count", 360)),
            elevation_angles_deg=tuple(d.get("elevation_angles_deg", np.linspace(-7.0, 52.0, 16))),
            max_range_m=float(d.get("max_range_m", 11.0)),
            range_noise_sigma_m=float(d.get("range_noise_sigma_m", 0.0)),
            max_points=int(d.get("max_points", 20000)),
        )


@dataclass(frozen=True)
class SceneConfig:
    room: Box
    static_obstacles: tuple = ()
    dynamic_obstacles: tuple = ()
    ego_trajectory: Trajectory = None
    ego_yaw_deg: float = 0.0
    lidar: LidarSpec = field(default_factory=LidarSpec)

    def __post_init__(self):
        object.__setattr__(self, "static_obstacles", tuple(self.static_obstacles))
        object.__setattr__(self, "dynamic_obstacles", tuple(self.dynamic_obstacles))
        if self.ego_trajectory is None:
            center = (self.room.minimum + self.room.maximum) / 2.0
            object.__setattr__(self, "ego_trajectory", Trajectory(center.reshape(1, 3), np.zeros(0)))


@dataclass(frozen=True)
class FrameRecord:
    """One simulated frame: the scan, the dynamic ground truth at its stamp,
    and (as instrumentation) the index of the dynamic obstacle each point
    came from, -1 for static structure."""

    scan: PointCloudScan
    ground_truth: tuple
    point_labels: np.ndarray | None = None


class Scene:
    """Validated immutable scene; safe to ray-cast concurrently for distinct
    stamps."""

    def __init__(self, config: SceneConfig):
        self.config = config
        self.room = config.room
        self.static = tuple(config.static_obstacles)
        self.dynamic = tuple(config.dynamic_obstacles)
        self.lidar = config.lidar
        for obs in self.static:
            lo = obs.minimum if isinstance(obs, Box) else np.array([*(obs.center - obs.radius), obs.zmin])
            hi = obs.maximum if isinstance(obs, Box) else np.array([*(obs.center + obs.radius), obs.zmax])
            if not (self.room.contains(lo, 1e-9) and self.room.contains(hi, 1e-9)):
                raise SceneConfigError("static obstacle extends outside the room")
        for dyn in self.dynamic:
            for wp in dyn.trajectory.waypoints:
                if not self.room.contains(wp, 1e-9):
                    raise SceneConfigError(f"dynamic obstacle {dyn.name!r} waypoint outside the room")
        ego0 = config.ego_trajectory.position(0.0)
        for obs in self.static:
            if obs.contains(ego0):
                raise SceneConfigError("ego start position lies inside a static obstacle")
        for dyn in self.dynamic:
            if dyn.present(0.0) and dyn.primitive_at(0.0).contains(ego0):
                raise SceneConfigError("ego start position lies inside a dynamic obstacle")

    @property
    def duration(self) -> float:
        times = [self.config.ego_trajectory.duration]
        times += [d.trajectory.duration for d in self.dynamic]
        return max(times) if times else 0.0

    def ego_state(self, t: Timestamp) -> EgoState:
        q = yaw_quaternion(np.deg2rad(self.config.ego_yaw_deg))
        pos = self.config.ego_trajectory.position(t)
        v_world = self.config.ego_trajectory.velocity(t)
        from .core import quaternion_to_matrix

        v_body = quaternion_to_matrix(q).T @ v_world
        return EgoState(position=pos, quaternion=q, body_velocity=v_body)

    def ground_truth(self, t: Timestamp) -> tuple:
        out = []
        for dyn in self.dynamic:
            if dyn.present(t):
                out.append(
                    GroundTruthObstacle(
                        id=dyn.name,
                        position=dyn.trajectory.position(t),
                        radius=dyn.footprint_radius(),
                        is_dynamic=True,
                    )
                )
        return tuple(out)


def build_scene(config: SceneConfig) -> Scene:
    """Validate a config into an immutable scene. Identical configs produce
    identical scenes; all randomness lives in cast_scan."""
    return Scene(config)


def cast_scan(scene: Scene, stamp: Timestamp, rng_seed: int) -> FrameRecord:
    """Ray-cast one sweep at `stamp` with nearest-hit semantics.

    Each (azimuth, elevation) ray takes its first intersection with any
    obstacle or room wall within max range; range noise perturbs the hit
    along the ray. Rays with no hit in range contribute no point. If more
    points survive than the configured cap, a uniform random subset is kept.
    """
    lidar = scene.lidar
    ego = scene.ego_state(stamp)
    R = ego.rotation()
    origin = ego.position
    dirs = lidar.ray_directions() @ R.T

    t_best = ray_box_exit(origin, dirs, scene.room)
    labels = np.full(dirs.shape[0], -1, dtype=np.int64)
    for obs in scene.static:
        t = ray_box_hit(origin, dirs, obs) if isinstance(obs, Box) else ray_cylinder_hit(origin, dirs, obs)
        t_best = np.minimum(t_best, t)
    for j, dyn in enumerate(scene.dynamic):
        if not dyn.present(stamp):
            continue
        prim = dyn.primitive_at(stamp)
        t = ray_box_hit(origin, dirs, prim) if isinstance(prim, Box) else ray_cylinder_hit(origin, dirs, prim)
        closer = t < t_best
        t_best = np.where(closer, t, t_best)
        labels = np.where(closer, j, labels)

    rng = np.random.default_rng([int(rng_seed) & 0xFFFFFFFF, int(round(stamp * 1e6)) & 0xFFFFFFFF])
    keep = np.isfinite(t_best) & (t_best <= lidar.max_range_m)
    if lidar.range_noise_sigma_m > 0:
        noise = rng.normal(0.0, lidar.range_noise_sigma_m, size=t_best.shape)
        t_best = t_best + np.where(keep, noise, 0.0)
        keep &= (t_best > 0) & (t_best <= lidar.max_range_m)
    idx = np.flatnonzero(keep)
    if idx.size > lidar.max_points:
        idx = np.sort(rng.choice(idx, size=lidar.max_points, replace=False))
    pts_world = origin + t_best[idx, None] * dirs[idx]
    pts_sensor = world_to_sensor(pts_world, ego)
    scan = PointCloudScan(stamp=stamp, points=pts_sensor, ego=ego)
    return FrameRecord(scan=scan, ground_truth=scene.ground_truth(stamp), point_labels=labels[idx])


def simulate_frames(scene: Scene, seconds: float, seed: int, start: float = 0.0) -> Iterator[FrameRecord]:
    """Yield frames at the lidar rate for `seconds` of scene time."""
    n = int(round(seconds * scene.lidar.rate_hz))
    period = 1.0 / scene.lidar.rate_hz
    for k in range(n):
        yield cast_scan(scene, start + k * period, rng_seed=_frame_seed(seed, k))


def _frame_seed(root_seed: int, frame_index: int) -> int:
    return (int(root_seed) * 1_000_003 + frame_index) & 0x7FFFFFFF


# ---------------------------------------------------------------------------
# target grids


def rasterize_target_grid(ground_truth: Sequence[GroundTruthObstacle], grid_spec: PillarSpec, stamp: Timestamp = 0.0) -> DynamicGrid:
    """Binary BEV grid: cells whose center lies within an obstacle's footprint
    radius of its (x, y) position are 1. Overlaps union without double
    counting."""
    n = grid_spec.grid_extent
    grid = np.zeros((n, n), dtype=np.float64)
    centers = grid_spec.cell_centers_1d()
    for obs in ground_truth:
        if not obs.is_dynamic:
            continue
        dx = centers - obs.position[0]
        dy = centers - obs.position[1]
        mask = dx[:, None] ** 2 + dy[None, :] ** 2 <= obs.radius**2
        grid[mask] = 1.0
    return DynamicGrid(stamp=stamp, probs=grid, spec=grid_spec)


# ---------------------------------------------------------------------------
# scene config files


def _obstacle_to_dict(obs) -> dict:
    if isinstance(obs, Box):
        return {"shape": "box", "min": obs.minimum.tolist(), "max": obs.maximum.tolist()}
    return {
        "shape": "cylinder",
        "center": obs.center.tolist(),
        "radius": obs.radius,
        "zmin": obs.zmin,
        "zmax": obs.zmax,
    }


def _obstacle_from_dict(d: dict):
    if d["shape"] == "box":
        return Box(minimum=d["min"], maximum=d["max"])
    if d["shape"] == "cylinder":
        return Cylinder(center=d["center"], radius=d["radius"], zmin=d["zmin"], zmax=d["zmax"])
    raise SceneConfigError(f"unknown static shape {d['shape']!r}")


def scene_config_to_dict(cfg: SceneConfig) -> dict:
    dyn = []
    for d in cfg.dynamic_obstacles:
        entry = {
            "name": d.name,
            "shape": d.shape,
            "waypoints": d.trajectory.waypoints.tolist(),
            "speeds": d.trajectory.speeds.tolist(),
        }
        if d.shape == "cylinder":
            entry["radius"] = d.radius
            entry["height"] = d.height
        else:
            entry["extents"] = d.extents.tolist()
        if d.gt_radius is not None:
            entry["gt_radius"] = d.gt_radius
        if d.start_time != 0.0:
            entry["start_time"] = d.start_time
        if np.isfinite(d.end_time):
            entry["end_time"] = d.end_time
        dyn.append(entry)
    return {
        "version": SCENE_VERSION,
        "room": {"min": cfg.room.minimum.tolist(), "max": cfg.room.maximum.tolist()},
        "static_obstacles": [_obstacle_to_dict(o) for o in cfg.static_obstacles],
        "dynamic_obstacles": dyn,
        "ego": {
            "waypoints": cfg.ego_trajectory.waypoints.tolist(),
            "speeds": cfg.ego_trajectory.speeds.tolist(),
            "yaw_deg": cfg.ego_yaw_deg,
        },
        "lidar": cfg.lidar.to_dict(),
    }


def scene_config_from_dict(d: dict) -> SceneConfig:
    version = d.get("version")
    if version != SCENE_VERSION:
        raise SceneConfigError(f"unsupported scene config version {version!r}")
    dyn = []
    for e in d.get("dynamic_obstacles", []):
        dyn.append(
            DynamicObstacleSpec(
                name=e["name"],
                shape=e["shape"],
                radius=float(e.get("radius", 0.0)),
                height=float(e.get("height", 0.0)),
                extents=e.get("extents"),
                gt_radius=e.get("gt_radius"),
                start_time=float(e.get("start_time", 0.0)),
                end_time=float(e.get("end_time", np.inf)),
                trajectory=Trajectory(e["waypoints"], e["speeds"]),
            )
        )
    ego = d.get("ego", {})
    ego_traj = None
    if "waypoints" in ego:
        ego_traj = Trajectory(ego["waypoints"], ego.get("speeds", []))
    return SceneConfig(
        room=Box(minimum=d["room"]["min"], maximum=d["room"]["max"]),
        static_obstacles=tuple(_obstacle_from_dict(o) for o in d.get("static_obstacles", [])),
        dynamic_obstacles=tuple(dyn),
        ego_trajectory=ego_traj,
        ego_yaw_deg=float(ego.get("yaw_deg", 0.0)),
        lidar=LidarSpec.from_dict(d.get("lidar", {})),
    )


def load_scene_config(path) -> SceneConfig:
    with open(path) as fh:
        try:
            d = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SceneConfigError(f"invalid scene config JSON: {exc}") from exc
    return scene_config_from_dict(d)


def save_scene_config(cfg: SceneConfig, path) -> None:
    Path(path).write_text(json.dumps(scene_config_to_dict(cfg), indent=2) + "\n")


# ---------------------------------------------------------------------------
# dataset record/replay


def _frame_to_dict(frame: FrameRecord) -> dict:
    scan = frame.scan
    return {
        "t": scan.stamp,
        "ego": {
            "p": scan.ego.position.tolist(),
            "q": scan.ego.quaternion.tolist(),
            "v": scan.ego.body_velocity.tolist(),
        },
        "points": scan.points.tolist(),
        "labels": None if frame.point_labels is None else frame.point_labels.tolist(),
        "gt": [
            {"id": g.id, "p": g.position.tolist(), "r": g.radius, "dyn": g.is_dynamic}
            for g in frame.ground_truth
        ],
    }


def _frame_from_dict(d: dict) -> FrameRecord:
    ego = EgoState(position=d["ego"]["p"], quaternion=d["ego"]["q"], body_velocity=d["ego"]["v"])
    scan = PointCloudScan(stamp=d["t"], points=np.asarray(d["points"], dtype=np.float64).reshape(-1, 3), ego=ego)
    gt = tuple(
        GroundTruthObstacle(id=g["id"], position=g["p"], radius=g["r"], is_dynamic=g["dyn"])
        for g in d["gt"]
    )
    labels = d.get("labels")
    return FrameRecord(
        scan=scan,
        ground_truth=gt,
        point_labels=None if labels is None else np.asarray(labels, dtype=np.int64),
    )


def write_dataset(frames: Iterable[FrameRecord], path, lidar: LidarSpec | None = None, meta: dict | None = None) -> int:
    """Write a header line then one frame record per line. Returns the number
    of frames written. Single-writer, append-only layout."""
    count = 0
    with open(path, "w") as fh:
        header = {
            "format": DATASET_FORMAT,
            "version": DATASET_VERSION,
            "lidar": None if lidar is None else lidar.to_dict(),
            "meta": meta or {},
        }
        fh.write(json.dumps(header, separators=(",", ":")) + "\n")
        for frame in frames:
            fh.write(json.dumps(_frame_to_dict(frame), separators=(",", ":")) + "\n")
            count += 1
    return count


def read_dataset_header(path) -> dict:
    with open(path) as fh:
        line = fh.readline()
        if not line:
            raise DatasetError("empty file, missing header", line=1)
        try:
            header = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DatasetError(f"malformed header: {exc}", line=1) from exc
    if header.get("format") != DATASET_FORMAT:
        raise DatasetError(f"not a {DATASET_FORMAT} file", line=1)
    return header


def iter_dataset(path) -> Iterator[FrameRecord]:
    """Stream frames from a dataset file, validating line by line."""
    read_dataset_header(path)
    with open(path) as fh:
        fh.readline()
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            try:
                d = json.loads(line)
                yield _frame_from_dict(d)
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise DatasetError(f"malformed frame record: {exc}", line=lineno) from exc


def read_dataset(path) -> list[FrameRecord]:
    return list(iter_dataset(path))

"""Temporal occupancy-grid moving-object segmentation.

Each voxel carries the timestamps of its last occupied and last unoccupied
observations plus the start of the current continuous run of either kind.
A voxel becomes free (f=1) once it has been observed unoccupied continuously
for longer than tau_u, and not-free (f=0) once observed occupied continuously
for longer than tau_o; both comparisons are strict. Unobserved frames neither
extend nor reset a run. Scan points landing in free voxels are dynamic,
everything else is static.

Free-space observations come from exact grid traversal of the segment between
the sensor origin and each return: every traversed voxel except ones hit this
frame is observed unoccupied.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .core import PointCloudScan, to_world


@dataclass(frozen=True)
class OgmConfig:
    resolution: float = 0.2  # meters per voxel
    max_radius: float = 11.0  # grid covers a cube of side 2*max_radius
    tau_o: float = 0.5  # seconds occupied before a voxel stops being free
    tau_u: float = 0.5  # seconds unoccupied before a voxel becomes free

    def __post_init__(self):
        if self.resolution <= 0 or self.max_radius <= 0:
            raise ValueError("resolution and max_radius must be > 0")
        if self.tau_o <= 0 or self.tau_u <= 0:
            raise ValueError("tau_o and tau_u must be > 0")

    @property
    def cells_per_side(self) -> int:
        return int(round(2.0 * self.max_radius / self.resolution))


@njit(cache=True)
def _dda_path(p0, p1, res, half, n, out):
    """March the voxel lattice from p0 to p1; write flat indices into `out`
    in visit order, ending at the endpoint's voxel. Returns the count."""
    ix = int(np.floor((p0[0] + half) / res))
    iy = int(np.floor((p0[1] + half) / res))
    iz = int(np.floor((p0[2] + half) / res))
    jx = int(np.floor((p1[0] + half) / res))
    jy = int(np.floor((p1[1] + half) / res))
    jz = int(np.floor((p1[2] + half) / res))

    dx = p1[0] - p0[0]
    dy = p1[1] - p0[1]
    dz = p1[2] - p0[2]

    step_x = 1 if dx > 0 else (-1 if dx < 0 else 0)
    step_y = 1 if dy > 0 else (-1 if dy < 0 else 0)
    step_z = 1 if dz > 0 else (-1 if dz < 0 else 0)

    big = 1e300
    t_delta_x = res / abs(dx) if dx != 0 else big
    t_delta_y = res / abs(dy) if dy != 0 else big
    t_delta_z = res / abs(dz) if dz != 0 else big

    if dx > 0:
        t_max_x = ((ix + 1) * res - half - p0[0]) / dx
    elif dx < 0:
        t_max_x = (ix * res - half - p0[0]) / dx
    else:
        t_max_x = big
    if dy > 0:
        t_max_y = ((iy + 1) * res - half - p0[1]) / dy
    elif dy < 0:
        t_max_y = (iy * res - half - p0[1]) / dy
    else:
        t_max_y = big
    if dz > 0:
        t_max_z = ((iz + 1) * res - half - p0[2]) / dz
    elif dz < 0:
        t_max_z = (iz * res - half - p0[2]) / dz
    else:
        t_max_z = big

    count = 0
    max_steps = 3 * n + 6
    for _ in range(max_steps):
        out[count] = (ix * n + iy) * n + iz
        count += 1
        if ix == jx and iy == jy and iz == jz:
            return count
        if t_max_x <= t_max_y and t_max_x <= t_max_z:
            if t_max_x > 1.0:
                break
            ix += step_x
            t_max_x += t_delta_x
        elif t_max_y <= t_max_z:
            if t_max_y > 1.0:
                break
            iy += step_y
            t_max_y += t_delta_y
        else:
            if t_max_z > 1.0:
                break
            iz += step_z
            t_max_z += t_delta_z
    # Endpoint voxel not reached by boundary stepping (endpoint on a voxel
    # face); close the path explicitly.
    flat_j = (jx * n + jy) * n + jz
    if out[count - 1] != flat_j:
        out[count] = flat_j
        count += 1
    return count


@njit(cache=True)
def _mark_traversed(origin, endpoints, res, half, n, buf):
    """Set buf[flat]=1 for every voxel traversed between the origin and each
    endpoint, excluding each ray's own endpoint voxel."""
    path = np.empty(3 * n + 8, dtype=np.int64)
    for r in range(endpoints.shape[0]):
        count = _dda_path(origin, endpoints[r], res, half, n, path)
        for k in range(count - 1):
            buf[path[k]] = 1


def traverse_ray(origin, endpoint, resolution: float) -> np.ndarray:
    """Exact ordered voxel traversal of a segment on the lattice with cells
    [i*resolution, (i+1)*resolution). Returns an (M, 3) array of integer
    voxel indices; every voxel whose interior the segment crosses appears
    exactly once, ending at the endpoint's voxel."""
    p0 = np.asarray(origin, dtype=np.float64).reshape(3)
    p1 = np.asarray(endpoint, dtype=np.float64).reshape(3)
    # Shift into a positive index range so flat packing is collision-free.
    span = max(np.abs(p0).max(), np.abs(p1).max()) + 2 * resolution
    half = float(np.ceil(span / resolution) * resolution)
    n = int(2 * round(half / resolution)) + 2
    out = np.empty(3 * n + 8, dtype=np.int64)
    count = _dda_path(p0, p1, float(resolution), half, n, out)
    flat = out[:count]
    ix = flat // (n * n)
    iy = (flat - ix * n * n) // n
    iz = flat - (ix * n + iy) * n
    off = int(round(half / resolution))
    return np.stack([ix - off, iy - off, iz - off], axis=1)


class TemporalVoxelGrid:
    """Dense cube of per-voxel temporal occupancy state centered on the world
    origin. Single writer per frame: integrate_scan mutates, segment_dynamic
    only reads."""

    def __init__(self, config: OgmConfig):
        self.config = config
        n = config.cells_per_side
        self.n = n
        size = n * n * n
        self.t_occ_last = np.full(size, -np.inf)
        self.t_unocc_last = np.full(size, -np.inf)
        self.t_occ_start = np.full(size, -np.inf)
        self.t_unocc_start = np.full(size, -np.inf)
        self.free = np.zeros(size, dtype=np.uint8)
        self.occupied_now = np.zeros(size, dtype=np.uint8)
        self._traverse_buf = np.zeros(size, dtype=np.uint8)
        self.dropped_points = 0
        self.last_stamp = None

    def voxel_flat_index(self, pts_world: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Flat voxel index per point plus an in-bounds mask."""
        res = self.config.resolution
        half = self.config.max_radius
        idx = np.floor((pts_world + half) / res).astype(np.int64)
        inb = np.all((idx >= 0) & (idx < self.n), axis=1)
        flat = (idx[:, 0] * self.n + idx[:, 1]) * self.n + idx[:, 2]
        return flat, inb

    def in_bounds_point(self, p: np.ndarray) -> bool:
        half = self.config.max_radius
        return bool(np.all(np.abs(np.asarray(p)) < half))

    def integrate_scan(self, scan: PointCloudScan) -> None:
        """Fold one scan into the grid: hit voxels observed occupied, voxels
        traversed by sensor-to-return segments observed unoccupied (unless
        hit this frame), then the run-length thresholds update free flags.
        Out-of-bounds points are dropped and counted."""
        cfg = self.config
        origin = scan.ego.position
        if not self.in_bounds_point(origin):
            raise ValueError("sensor origin lies outside the voxel grid")
        pts_world = to_world(scan)
        flat, inb = self.voxel_flat_index(pts_world)
        self.dropped_points += int((~inb).sum())
        flat = flat[inb]
        pts_world = pts_world[inb]
        t = scan.stamp

        occ = np.unique(flat)
        buf = self._traverse_buf
        buf.fill(0)
        if len(pts_world):
            _mark_traversed(origin, np.ascontiguousarray(pts_world), cfg.resolution, cfg.max_radius, self.n, buf)
            buf[occ] = 0
        unocc = np.flatnonzero(buf)

        if len(occ):
            restart = (self.t_unocc_last[occ] > self.t_occ_last[occ]) | np.isneginf(self.t_occ_last[occ])
            self.t_occ_start[occ[restart]] = t
            self.t_occ_last[occ] = t
            long_occ = (t - self.t_occ_start[occ]) > cfg.tau_o
            self.free[occ[long_occ]] = 0
        if len(unocc):
            restart = (self.t_occ_last[unocc] > self.t_unocc_last[unocc]) | np.isneginf(self.t_unocc_last[unocc])
            self.t_unocc_start[unocc[restart]] = t
            self.t_unocc_last[unocc] = t
            long_unocc = (t - self.t_unocc_start[unocc]) > cfg.tau_u
            self.free[unocc[long_unocc]] = 1

        self.occupied_now.fill(0)
        self.occupied_now[occ] = 1
        self.last_stamp = t

    def segment_dynamic(self, scan: PointCloudScan) -> tuple[np.ndarray, np.ndarray]:
        """Partition the scan's in-bounds points (world frame) into dynamic
        and static: a point is dynamic iff its voxel is currently free and
        occupied. Requires integrate_scan for the same frame first."""
        pts_world = to_world(scan)
        flat, inb = self.voxel_flat_index(pts_world)
        pts_world = pts_world[inb]
        flat = flat[inb]
        dyn_mask = (self.free[flat] == 1) & (self.occupied_now[flat] == 1)
        return pts_world[dyn_mask], pts_world[~dyn_mask]

    def flat_to_index3(self, flat: np.ndarray) -> np.ndarray:
        n = self.n
        ix = flat // (n * n)
        iy = (flat - ix * n * n) // n
        iz = flat - (ix * n + iy) * n
        return np.stack([ix, iy, iz], axis=1)

    def export_snapshot(self, path) -> int:
        """Dump voxels that are currently free or occupied as line-delimited
        JSON for debugging; returns the number of rows written."""
        import json

        interesting = np.flatnonzero((self.free == 1) | (self.occupied_now == 1))
        idx3 = self.flat_to_index3(interesting)
        with open(path, "w") as fh:
            header = {
                "format": "dynogrid.voxels",
                "version": 1,
                "resolution": self.config.resolution,
                "max_radius": self.config.max_radius,
                "stamp": self.last_stamp,
            }
            fh.write(json.dumps(header, separators=(",", ":")) + "\n")
            for row, flat_i in zip(idx3, interesting):
                rec = {
                    "i": row.tolist(),
                    "f": int(self.free[flat_i]),
                    "o": int(self.occupied_now[flat_i]),
                }
                fh.write(json.dumps(rec, separators=(",", ":")) + "\n")
        return len(interesting)


def integrate_scan(grid: TemporalVoxelGrid, scan: PointCloudScan) -> None:
    grid.integrate_scan(scan)


def segment_dynamic(grid: TemporalVoxelGrid, scan: PointCloudScan) -> tuple[np.ndarray, np.ndarray]:
    return grid.segment_dynamic(scan)

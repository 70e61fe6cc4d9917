"""Bird's-eye-view grid geometry shared by the simulator, the learned
dynamic-grid model, and detection fusion.

Grids are square, world-axis-aligned and centered on the world origin, the
same footprint the occupancy grid uses. probs[ix, iy] covers the column
x in [x0 + ix*cell, x0 + (ix+1)*cell), y likewise, with
x0 = -grid_extent*cell_size/2.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .core import Timestamp


@dataclass(frozen=True)
class PillarSpec:
    """Geometry of the BEV discretization.

    cell_size : meters per cell (default 0.2)
    grid_extent : cells per side (default 110, covering +-11 m)
    max_points_per_pillar : cap on points encoded per vertical column
    """

    cell_size: float = 0.2
    grid_extent: int = 110
    max_points_per_pillar: int = 20

    # Per-point feature layout is fixed: (x, y, z, x - pillar_mean_x,
    # y - pillar_mean_y, z - pillar_mean_z, x - cell_center_x,
    # y - cell_center_y).
    FEATURE_WIDTH = 8

    @property
    def half_extent(self) -> float:
        return self.grid_extent * self.cell_size / 2.0

    def cell_index(self, xy: np.ndarray) -> np.ndarray:
        """Map (N, 2) world xy to integer cell indices (N, 2). No bounds check."""
        return np.floor((np.asarray(xy) + self.half_extent) / self.cell_size).astype(np.int64)

    def in_bounds(self, idx: np.ndarray) -> np.ndarray:
        return np.all((idx >= 0) & (idx < self.grid_extent), axis=-1)

    def cell_centers_1d(self) -> np.ndarray:
        """World coordinate of each cell center along one axis."""
        return (np.arange(self.grid_extent) + 0.5) * self.cell_size - self.half_extent


@dataclass
class DynamicGrid:
    """Per-cell dynamic evidence: probabilities in [0, 1] from the model, or
    binary labels when used as a training target."""

    stamp: Timestamp
    probs: np.ndarray  # (grid_extent, grid_extent), indexed [ix, iy]
    spec: PillarSpec

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=np.float64)
        expect = (self.spec.grid_extent, self.spec.grid_extent)
        if self.probs.shape != expect:
            raise ValueError(f"grid shape {self.probs.shape} != spec shape {expect}")
        if self.probs.min() < 0.0 or self.probs.max() > 1.0:
            raise ValueError("grid values must lie in [0, 1]")


@dataclass(frozen=True)
class Detection2D:
    """One connected blob of dynamic cells, reduced to its area centroid."""

    position: np.ndarray  # (2,) world x, y
    cell_count: int
    stamp: Timestamp

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=np.float64).reshape(2))


_NEIGHBORS_8 = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)]


def extract_detections_2d(grid: DynamicGrid, threshold: float = 0.5) -> list[Detection2D]:
    """Group cells with prob > threshold into 8-connected components and emit
    one detection per component at the centroid of its cell centers.

    Components are ordered by their smallest flat cell index so output order
    is deterministic.
    """
    if not 0.0 < threshold < 1.0:
        raise ValueError("threshold must lie in (0, 1)")
    mask = grid.probs > threshold
    n = grid.spec.grid_extent
    centers = grid.spec.cell_centers_1d()
    seen = np.zeros_like(mask, dtype=bool)
    detections = []
    for ix in range(n):
        if not mask[ix].any():
            continue
        for iy in range(n):
            if not mask[ix, iy] or seen[ix, iy]:
                continue
            queue = deque([(ix, iy)])
            seen[ix, iy] = True
            cells = []
            while queue:
                cx, cy = queue.popleft()
                cells.append((cx, cy))
                for dx, dy in _NEIGHBORS_8:
                    nx, ny = cx + dx, cy + dy
                    if 0 <= nx < n and 0 <= ny < n and mask[nx, ny] and not seen[nx, ny]:
                        seen[nx, ny] = True
                        queue.append((nx, ny))
            arr = np.array(cells)
            pos = np.array([centers[arr[:, 0]].mean(), centers[arr[:, 1]].mean()])
            detections.append(Detection2D(position=pos, cell_count=len(cells), stamp=grid.stamp))
    return detections

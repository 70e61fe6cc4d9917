"""Grouping of dynamic points into object candidates.

Dynamic points are linked into connected components by distance, individual
points sitting against static structure are demoted back to static (the
artifact suppression step), and surviving clusters are kept or dropped on
cluster density rather than raw point count.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Timestamp


@dataclass(frozen=True)
class ClusterConfig:
    linkage_radius: float = 0.3  # meters between points of one object
    min_density: float = 50.0  # points per cubic meter of bounding box
    nn_static_radius: float = 0.2  # neighborhood for the static-proximity check
    nn_static_fraction: float = 0.5  # static neighbor fraction that demotes a point
    min_volume: float = 0.2**3  # bbox volume floor guarding flat boxes

    def __post_init__(self):
        if min(self.linkage_radius, self.min_density, self.nn_static_radius, self.min_volume) <= 0:
            raise ValueError("cluster config values must be positive")
        if not 0.0 <= self.nn_static_fraction <= 1.0:
            raise ValueError("nn_static_fraction must lie in [0, 1]")


@dataclass(frozen=True)
class Detection3D:
    """One clustered obstacle candidate."""

    centroid: np.ndarray  # (3,) world frame
    bbox_min: np.ndarray
    bbox_max: np.ndarray
    point_count: int
    stamp: Timestamp

    def __post_init__(self):
        object.__setattr__(self, "centroid", np.asarray(self.centroid, dtype=np.float64).reshape(3))
        object.__setattr__(self, "bbox_min", np.asarray(self.bbox_min, dtype=np.float64).reshape(3))
        object.__setattr__(self, "bbox_max", np.asarray(self.bbox_max, dtype=np.float64).reshape(3))
        if self.point_count < 1:
            raise ValueError("detection needs at least one point")


class _CellHash:
    """Uniform-grid spatial hash over 3D points for radius queries. Cells are
    bucketed with one vectorized sort so construction stays cheap for large
    static sets."""

    _PACK = np.int64(1 << 21)

    def __init__(self, points: np.ndarray, cell: float):
        self.points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        self.cell = cell
        n = len(self.points)
        if n:
            keys3 = np.floor(self.points / cell).astype(np.int64)
            packed = (keys3[:, 0] * self._PACK + keys3[:, 1]) * self._PACK + keys3[:, 2]
            order = np.argsort(packed, kind="stable")
            sorted_keys = packed[order]
            starts = np.flatnonzero(np.diff(sorted_keys, prepend=sorted_keys[0] - 1))
            ends = np.append(starts[1:], n)
            self._order = order
            self.table = {int(sorted_keys[s]): (int(s), int(e)) for s, e in zip(starts, ends)}
        else:
            self._order = np.zeros(0, dtype=np.int64)
            self.table = {}

    def neighbors_within(self, p: np.ndarray, radius: float) -> np.ndarray:
        if not self.table:
            return np.zeros(0, dtype=np.int64)
        k = np.floor(np.asarray(p) / self.cell).astype(np.int64)
        reach = int(np.ceil(radius / self.cell))
        chunks = []
        for dx in range(-reach, reach + 1):
            for dy in range(-reach, reach + 1):
                base = ((k[0] + dx) * self._PACK + k[1] + dy) * self._PACK + k[2]
                for dz in range(-reach, reach + 1):
                    span = self.table.get(int(base + dz))
                    if span is not None:
                        chunks.append(self._order[span[0] : span[1]])
        if not chunks:
            return np.zeros(0, dtype=np.int64)
        idx = np.concatenate(chunks)
        d2 = np.sum((self.points[idx] - p) ** 2, axis=1)
        return idx[d2 <= radius * radius]


def euclidean_cluster(points: np.ndarray, linkage_radius: float) -> list[np.ndarray]:
    """Connected components of the graph linking points within
    linkage_radius. Returns sorted index arrays, ordered by each component's
    lowest member index; together they partition the input."""
    if linkage_radius <= 0:
        raise ValueError("linkage_radius must be > 0")
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    n = len(pts)
    if n == 0:
        return []
    grid = _CellHash(pts, linkage_radius)
    visited = np.zeros(n, dtype=bool)
    clusters = []
    for seed in range(n):
        if visited[seed]:
            continue
        stack = [seed]
        visited[seed] = True
        members = []
        while stack:
            i = stack.pop()
            members.append(i)
            for j in grid.neighbors_within(pts[i], linkage_radius):
                if not visited[j]:
                    visited[j] = True
                    stack.append(int(j))
        clusters.append(np.array(sorted(members), dtype=np.int64))
    return clusters


def density_filter(cluster_points: np.ndarray, config: ClusterConfig) -> bool:
    """Keep a cluster iff its point count per bounding-box volume reaches
    min_density; the volume floor keeps single points and flat sheets from
    dividing by zero."""
    pts = np.asarray(cluster_points, dtype=np.float64).reshape(-1, 3)
    if len(pts) == 0:
        raise ValueError("cluster must be non-empty")
    extent = pts.max(axis=0) - pts.min(axis=0)
    volume = max(float(np.prod(extent)), config.min_volume)
    return len(pts) / volume >= config.min_density


def static_proximity_check(
    cluster_points: np.ndarray,
    static_points: np.ndarray,
    config: ClusterConfig,
    static_hash: _CellHash | None = None,
) -> np.ndarray:
    """Retain mask over the cluster's points: a point is demoted when at
    least nn_static_fraction of its neighbors within nn_static_radius are
    static. Neighbors are the static points plus the other cluster points;
    a point with no neighbors at all is retained. A prebuilt static-point
    hash can be shared across the clusters of one frame."""
    pts = np.asarray(cluster_points, dtype=np.float64).reshape(-1, 3)
    stat = np.asarray(static_points, dtype=np.float64).reshape(-1, 3)
    retain = np.ones(len(pts), dtype=bool)
    if len(pts) == 0 or len(stat) == 0:
        return retain
    r = config.nn_static_radius
    if static_hash is None:
        static_hash = _CellHash(stat, r)
    cluster_hash = _CellHash(pts, r)
    for i, p in enumerate(pts):
        n_static = len(static_hash.neighbors_within(p, r))
        if n_static == 0:
            continue
        n_dyn = len(cluster_hash.neighbors_within(p, r)) - 1  # exclude self
        frac = n_static / (n_static + max(n_dyn, 0))
        if frac >= config.nn_static_fraction:
            retain[i] = False
    return retain


def detect_objects(
    dynamic_points: np.ndarray,
    static_points: np.ndarray,
    config: ClusterConfig,
    stamp: Timestamp,
) -> list[Detection3D]:
    """Full candidate extraction: cluster, demote wall-hugging points, apply
    the density filter, and box up what survives. Filters only remove; no
    detection is fabricated beyond the raw clusters."""
    dyn = np.asarray(dynamic_points, dtype=np.float64).reshape(-1, 3)
    stat = np.asarray(static_points, dtype=np.float64).reshape(-1, 3)
    static_hash = _CellHash(stat, config.nn_static_radius) if len(dyn) and len(stat) else None
    detections = []
    for idx in euclidean_cluster(dyn, config.linkage_radius):
        pts = dyn[idx]
        retain = static_proximity_check(pts, static_points, config, static_hash=static_hash)
        kept = pts[retain]
        if len(kept) == 0:
            continue
        if not density_filter(kept, config):
            continue
        detections.append(
            Detection3D(
                centroid=kept.mean(axis=0),
                bbox_min=kept.min(axis=0),
                bbox_max=kept.max(axis=0),
                point_count=len(kept),
                stamp=stamp,
            )
        )
    return detections

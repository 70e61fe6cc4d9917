import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dynogrid.cluster import (
    ClusterConfig,
    Detection3D,
    density_filter,
    detect_objects,
    euclidean_cluster,
    static_proximity_check,
)


def brute_force_components(points, radius):
    """O(n^2) union-find over the pairwise-distance graph."""
    n = len(points)
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(n):
        for j in range(i + 1, n):
            if np.linalg.norm(points[i] - points[j]) <= radius:
                ri, rj = find(i), find(j)
                if ri != rj:
                    parent[ri] = rj
    groups = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(i)
    comps = [sorted(v) for v in groups.values()]
    comps.sort(key=lambda c: c[0])
    return comps


def test_empty_input():
    assert euclidean_cluster(np.zeros((0, 3)), 0.3) == []


def test_two_close_points_one_cluster():
    pts = np.array([[0, 0, 0], [0.1, 0, 0]])
    comps = euclidean_cluster(pts, 0.3)
    assert len(comps) == 1 and list(comps[0]) == [0, 1]


def test_two_far_points_two_clusters():
    pts = np.array([[0, 0, 0], [1.0, 0, 0]])
    comps = euclidean_cluster(pts, 0.3)
    assert len(comps) == 2


def test_matches_brute_force_on_random_points():
    rng = np.random.default_rng(0)
    for trial in range(20):
        n = int(rng.integers(2, 60))
        pts = rng.uniform(-2, 2, size=(n, 3))
        r = float(rng.uniform(0.1, 1.0))
        got = [list(c) for c in euclidean_cluster(pts, r)]
        want = brute_force_components(pts, r)
        assert got == want


@settings(max_examples=40, deadline=None)
@given(
    st.integers(min_value=0, max_value=2**32 - 1),
    st.integers(min_value=1, max_value=500),
    st.floats(min_value=0.05, max_value=1.5),
)
def test_property_clustering_equals_oracle(seed, n, radius):
    rng = np.random.default_rng(seed)
    pts = rng.uniform(-3, 3, size=(n, 3))
    got = [list(c) for c in euclidean_cluster(pts, radius)]
    want = brute_force_components(pts, radius)
    assert got == want


def test_partition_property():
    rng = np.random.default_rng(5)
    pts = rng.uniform(-1, 1, size=(80, 3))
    comps = euclidean_cluster(pts, 0.25)
    all_idx = sorted(i for c in comps for i in c)
    assert all_idx == list(range(80))


def test_density_filter_keeps_dense_cluster():
    # 40 points in a 0.5 x 0.5 x 1.7 box: ~94 pts/m^3 against threshold 50
    rng = np.random.default_rng(2)
    pts = rng.uniform([0, 0, 0], [0.5, 0.5, 1.7], size=(40, 3))
    pts[0] = [0, 0, 0]
    pts[1] = [0.5, 0.5, 1.7]
    assert density_filter(pts, ClusterConfig(min_density=50.0))


def test_density_filter_drops_sparse_cluster():
    # 3 points spread over 2 x 2 x 2 m: 0.375 pts/m^3
    pts = np.array([[0, 0, 0], [2, 2, 2], [0, 2, 1]], dtype=float)
    assert not density_filter(pts, ClusterConfig(min_density=50.0))


def test_density_filter_single_point_volume_guard():
    pts = np.array([[1.0, 1.0, 1.0]])
    cfg = ClusterConfig(min_density=50.0, min_volume=0.2**3)
    # 1 / 0.008 = 125 pts/m^3 >= 50
    assert density_filter(pts, cfg)


def test_proximity_no_static_points_all_retained():
    pts = np.random.default_rng(0).normal(size=(10, 3))
    mask = static_proximity_check(pts, np.zeros((0, 3)), ClusterConfig())
    assert mask.all()


def test_proximity_demotes_point_on_wall():
    # neighbor-count oracle: the wall patch dominates the neighborhood
    wall = np.array([[0.0, y, z] for y in np.arange(-0.3, 0.31, 0.05) for z in np.arange(-0.3, 0.31, 0.05)])
    cluster = np.array([[0.05, 0.0, 0.0], [1.5, 0.0, 0.0]])
    cfg = ClusterConfig(nn_static_radius=0.2, nn_static_fraction=0.5)
    mask = static_proximity_check(cluster, wall, cfg)
    n_static_near = int(np.sum(np.linalg.norm(wall - cluster[0], axis=1) <= 0.2))
    assert n_static_near / (n_static_near + 1) >= 0.5  # oracle confirms demotion
    assert not mask[0]
    assert mask[1]


def test_proximity_isolated_cluster_untouched():
    wall = np.array([[5.0, 5.0, 0.0]])
    cluster = np.random.default_rng(1).normal(loc=[1, 1, 1], scale=0.05, size=(8, 3))
    mask = static_proximity_check(cluster, wall, ClusterConfig())
    assert mask.all()


def test_detect_objects_builds_detection():
    rng = np.random.default_rng(3)
    blob = rng.normal(loc=[1, 1, 1], scale=0.05, size=(30, 3))
    dets = detect_objects(blob, np.zeros((0, 3)), ClusterConfig(), stamp=2.5)
    assert len(dets) == 1
    d = dets[0]
    assert d.point_count == 30
    assert d.stamp == 2.5
    assert np.all(d.centroid >= d.bbox_min) and np.all(d.centroid <= d.bbox_max)
    np.testing.assert_allclose(d.centroid, blob.mean(axis=0))


def test_filters_only_remove():
    rng = np.random.default_rng(4)
    dyn = np.concatenate(
        [
            rng.normal(loc=[1, 1, 1], scale=0.05, size=(25, 3)),
            rng.normal(loc=[3, 3, 1], scale=0.05, size=(25, 3)),
            rng.uniform(-4, 4, size=(5, 3)),  # sparse scatter
        ]
    )
    raw_clusters = euclidean_cluster(dyn, 0.3)
    dets = detect_objects(dyn, np.zeros((0, 3)), ClusterConfig(), stamp=0.0)
    assert len(dets) <= len(raw_clusters)


def test_wall_brush_demotion_drops_cluster():
    """A thin dynamic sliver hugging a dense static wall is fully demoted,
    so the cluster disappears; the same sliver away from the wall survives."""
    rng = np.random.default_rng(6)
    wall = np.array(
        [[0.0, y, z] for y in np.arange(-1, 1.01, 0.05) for z in np.arange(0, 1.81, 0.05)]
    )
    sliver = np.stack(
        [
            np.full(30, 0.1),
            rng.uniform(-0.2, 0.2, 30),
            rng.uniform(0.2, 1.6, 30),
        ],
        axis=1,
    )
    cfg = ClusterConfig(nn_static_radius=0.2, nn_static_fraction=0.5)
    assert len(detect_objects(sliver, wall, cfg, stamp=0.0)) == 0
    moved = sliver + np.array([1.5, 0, 0])
    assert len(detect_objects(moved, wall, cfg, stamp=0.0)) == 1


def test_detection_requires_points():
    with pytest.raises(ValueError):
        Detection3D(centroid=[0, 0, 0], bbox_min=[0, 0, 0], bbox_max=[0, 0, 0], point_count=0, stamp=0.0)

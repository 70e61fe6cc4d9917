import numpy as np
import pytest

from dynogrid.core import (
    EgoState,
    GroundTruthObstacle,
    PointCloudScan,
    body_to_world_velocity,
    to_world,
    world_to_sensor,
    yaw_quaternion,
)


def make_scan(points, position=(0, 0, 0), quat=(0, 0, 0, 1), vel=(0, 0, 0), stamp=0.0):
    ego = EgoState(position=position, quaternion=quat, body_velocity=vel)
    return PointCloudScan(stamp=stamp, points=points, ego=ego)


def test_to_world_identity():
    scan = make_scan([[1.0, 0.0, 0.0]])
    np.testing.assert_array_equal(to_world(scan), [[1.0, 0.0, 0.0]])


def test_to_world_pure_translation():
    scan = make_scan([[1.0, 0.0, 0.0]], position=(2, 0, 0))
    np.testing.assert_allclose(to_world(scan), [[3.0, 0.0, 0.0]])


def test_to_world_90deg_yaw():
    # expected from a hand-built rotation matrix for a 90 degree yaw
    scan = make_scan([[1.0, 0.0, 0.0]], quat=yaw_quaternion(np.pi / 2))
    np.testing.assert_allclose(to_world(scan), [[0.0, 1.0, 0.0]], atol=1e-9)


def test_to_world_output_length_matches():
    pts = np.random.default_rng(0).normal(size=(17, 3))
    scan = make_scan(pts, position=(1, 2, 3), quat=yaw_quaternion(0.3))
    assert to_world(scan).shape == (17, 3)


def test_non_unit_quaternion_rejected():
    with pytest.raises(ValueError):
        EgoState(position=[0, 0, 0], quaternion=[0, 0, 0, 2.0])


def test_small_quaternion_drift_renormalized():
    ego = EgoState(position=[0, 0, 0], quaternion=[0, 0, 0, 1.0 + 1e-8])
    assert abs(np.linalg.norm(ego.quaternion) - 1.0) < 1e-12


def test_body_to_world_velocity_identity():
    ego = EgoState(position=[0, 0, 0], quaternion=[0, 0, 0, 1], body_velocity=[1, 2, 3])
    np.testing.assert_allclose(body_to_world_velocity(ego), [1, 2, 3])


def test_body_to_world_velocity_180_yaw():
    # hand evaluation: yaw pi flips x
    ego = EgoState(position=[0, 0, 0], quaternion=yaw_quaternion(np.pi), body_velocity=[1, 0, 0])
    np.testing.assert_allclose(body_to_world_velocity(ego), [-1, 0, 0], atol=1e-9)


def test_body_to_world_velocity_zero():
    ego = EgoState(position=[0, 0, 0], quaternion=yaw_quaternion(1.0), body_velocity=[0, 0, 0])
    np.testing.assert_array_equal(body_to_world_velocity(ego), [0, 0, 0])


def test_round_trip_world_sensor():
    rng = np.random.default_rng(3)
    pts = rng.uniform(-5, 5, size=(50, 3))
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    scan = make_scan(pts, position=(0.5, -1.0, 2.0), quat=q)
    back = world_to_sensor(to_world(scan), scan.ego)
    np.testing.assert_allclose(back, pts, atol=1e-9)


def test_transform_preserves_pairwise_distances():
    rng = np.random.default_rng(4)
    pts = rng.uniform(-5, 5, size=(20, 3))
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    scan = make_scan(pts, position=(1, 2, 3), quat=q)
    w = to_world(scan)
    d0 = np.linalg.norm(pts[:, None] - pts[None, :], axis=2)
    d1 = np.linalg.norm(w[:, None] - w[None, :], axis=2)
    np.testing.assert_allclose(d0, d1, atol=1e-9)


def test_ground_truth_obstacle_requires_positive_radius():
    with pytest.raises(ValueError):
        GroundTruthObstacle(id="x", position=[0, 0, 0], radius=0.0)


def test_scan_rejects_bad_shape():
    with pytest.raises(ValueError):
        make_scan(np.zeros((3, 2)))

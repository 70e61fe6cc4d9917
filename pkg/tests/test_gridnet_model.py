import numpy as np
import pytest

from dynogrid.core import EgoState, PointCloudScan
from dynogrid.grids import DynamicGrid, PillarSpec, extract_detections_2d
from dynogrid.gridnet.model import (
    GridNetConfig,
    GridNetModel,
    build_pillars,
    load_weights,
    save_weights,
)

TINY_SPEC = PillarSpec(cell_size=0.5, grid_extent=8, max_points_per_pillar=4)
TINY_CFG = GridNetConfig(
    pillar_channels=4,
    compress_channels=(6, 8),
    velocity_channels=4,
    lstm_hidden=16,
    decoder_channels=(4, 4),
    history=3,
)


def tiny_model(seed=3, zero=False):
    return GridNetModel(TINY_SPEC, TINY_CFG, seed=seed, zero_init=zero)


def rand_inputs(seed=5, n_points=25):
    rng = np.random.default_rng(seed)
    scans = [rng.uniform(-1.9, 1.9, size=(n_points, 3)) for _ in range(3)]
    vels = [rng.uniform(-1, 1, 3) for _ in range(3)]
    return scans, vels


def test_build_pillars_empty():
    pd = build_pillars(np.zeros((0, 3)), TINY_SPEC)
    assert pd.features.shape == (0, 4, 8)


def test_build_pillars_feature_layout():
    pts = np.array([[0.3, 0.4, 1.0], [0.4, 0.3, 0.6]])
    pd = build_pillars(pts, TINY_SPEC)
    assert len(pd.ix) == 1  # same 0.5 m cell
    feats = pd.features[0]
    assert pd.valid[0, :2].all() and not pd.valid[0, 2:].any()
    np.testing.assert_allclose(feats[0, 0:3], pts[0])
    np.testing.assert_allclose(feats[0, 3:6], pts[0] - pts.mean(axis=0))
    centers = TINY_SPEC.cell_centers_1d()
    np.testing.assert_allclose(feats[0, 6], pts[0][0] - centers[pd.ix[0]])
    np.testing.assert_allclose(feats[0, 7], pts[0][1] - centers[pd.iy[0]])


def test_build_pillars_out_of_extent_dropped():
    pts = np.array([[50.0, 0.0, 0.0], [0.3, 0.3, 0.5]])
    pd = build_pillars(pts, TINY_SPEC)
    assert pd.features.shape[0] == 1


def test_build_pillars_cap_is_order_independent():
    rng = np.random.default_rng(1)
    pts = rng.uniform(0.0, 0.49, size=(9, 3))  # one cell, above the cap of 4
    a = build_pillars(pts, TINY_SPEC)
    b = build_pillars(pts[::-1], TINY_SPEC)
    np.testing.assert_array_equal(a.features, b.features)


def test_encode_empty_scan_zero_map():
    model = tiny_model()
    out = model.encode_pillars(np.zeros((0, 3)))
    assert out.shape == (4, 8, 8)
    assert np.all(out.data == 0.0)


def test_encode_single_point_single_column():
    model = tiny_model()
    out = model.encode_pillars(np.array([[0.3, 0.4, 0.5]]))
    nz = np.any(out.data != 0.0, axis=0)
    assert nz.sum() == 1


def test_encode_permutation_invariance():
    model = tiny_model()
    rng = np.random.default_rng(0)
    pts = rng.uniform(-1.9, 1.9, size=(40, 3))
    a = model.encode_pillars(pts).data
    b = model.encode_pillars(pts[rng.permutation(40)]).data
    np.testing.assert_array_equal(a, b)


def test_encode_locality():
    # perturbing points in one pillar leaves other pillars untouched
    model = tiny_model()
    pts = np.array([[0.3, 0.3, 0.5], [-1.3, -1.3, 0.5]])
    base = model.encode_pillars(pts).data
    moved = pts.copy()
    moved[0, 2] += 0.2
    out = model.encode_pillars(moved).data
    cell_b = TINY_SPEC.cell_index(pts[1:, :2])[0]
    np.testing.assert_array_equal(out[:, cell_b[0], cell_b[1]], base[:, cell_b[0], cell_b[1]])
    cell_a = TINY_SPEC.cell_index(pts[:1, :2])[0]
    assert not np.array_equal(out[:, cell_a[0], cell_a[1]], base[:, cell_a[0], cell_a[1]])


def test_forward_zero_model_gives_half_probs():
    model = tiny_model(zero=True)
    scans, vels = rand_inputs()
    grid = model.forward(scans, vels)
    np.testing.assert_allclose(grid.probs, 0.5)


def test_forward_output_shape_contract():
    model = tiny_model()
    scans, vels = rand_inputs()
    grid = model.forward(scans, vels)
    assert grid.probs.shape == (8, 8)
    assert grid.probs.min() >= 0.0 and grid.probs.max() <= 1.0


def test_forward_rejects_wrong_history_length():
    model = tiny_model()
    scans, vels = rand_inputs()
    with pytest.raises(ValueError):
        model.forward(scans[:2], vels[:2])


def test_forward_accepts_scan_objects():
    model = tiny_model()
    ego = EgoState(position=[0, 0, 1], quaternion=[0, 0, 0, 1])
    scans = [PointCloudScan(stamp=0.1 * k, points=[[0.5, 0.5, 0.5]], ego=ego) for k in range(3)]
    grid = model.forward(scans, [np.zeros(3)] * 3)
    assert grid.stamp == pytest.approx(0.2)


def test_weights_round_trip(tmp_path):
    model = tiny_model(seed=11)
    scans, vels = rand_inputs()
    before = model.forward(scans, vels).probs
    path = tmp_path / "w.json"
    save_weights(model, path)
    assert (tmp_path / "w.bin").exists()
    loaded = load_weights(path)
    assert loaded.config == model.config and loaded.spec == model.spec
    for name in model.params:
        np.testing.assert_array_equal(loaded.params[name].data, model.params[name].data)
    after = loaded.forward(scans, vels).probs
    np.testing.assert_array_equal(before, after)


def test_weights_save_deterministic_bytes(tmp_path):
    model = tiny_model(seed=7)
    path = tmp_path / "a.json"
    save_weights(model, path)
    first = (path.read_bytes(), (tmp_path / "a.bin").read_bytes())
    save_weights(model, path)
    assert (path.read_bytes(), (tmp_path / "a.bin").read_bytes()) == first


# ---------------------------------------------------------------------------
# extract_detections_2d


def grid_from(arr, stamp=0.0):
    spec = PillarSpec(cell_size=0.5, grid_extent=arr.shape[0])
    return DynamicGrid(stamp=stamp, probs=np.asarray(arr, dtype=float), spec=spec)


def test_extract_empty():
    assert extract_detections_2d(grid_from(np.zeros((8, 8)))) == []


def test_extract_single_cell_world_position():
    spec = PillarSpec(cell_size=0.5, grid_extent=8)
    probs = np.zeros((8, 8))
    probs[6, 5] = 0.9
    grid = DynamicGrid(stamp=1.0, probs=probs, spec=spec)
    dets = extract_detections_2d(grid, 0.5)
    assert len(dets) == 1
    centers = spec.cell_centers_1d()
    np.testing.assert_allclose(dets[0].position, [centers[6], centers[5]])
    assert dets[0].cell_count == 1
    assert dets[0].stamp == 1.0


def test_extract_two_blobs_flood_fill_oracle():
    probs = np.zeros((10, 10))
    probs[1:3, 1:3] = 0.8
    probs[7:9, 6:9] = 0.7
    dets = extract_detections_2d(grid_from(probs), 0.5)
    assert len(dets) == 2
    assert dets[0].cell_count == 4 and dets[1].cell_count == 6
    spec = PillarSpec(cell_size=0.5, grid_extent=10)
    centers = spec.cell_centers_1d()
    np.testing.assert_allclose(dets[0].position, [centers[1:3].mean(), centers[1:3].mean()])
    np.testing.assert_allclose(dets[1].position, [centers[7:9].mean(), centers[6:9].mean()])


def test_extract_8_connectivity():
    probs = np.zeros((6, 6))
    probs[1, 1] = 0.9
    probs[2, 2] = 0.9  # diagonal neighbor joins the same component
    dets = extract_detections_2d(grid_from(probs), 0.5)
    assert len(dets) == 1 and dets[0].cell_count == 2


def test_extract_threshold_strict():
    probs = np.full((4, 4), 0.5)
    assert extract_detections_2d(grid_from(probs), 0.5) == []


def test_extract_threshold_validation():
    with pytest.raises(ValueError):
        extract_detections_2d(grid_from(np.zeros((4, 4))), 1.0)


def test_dynamic_grid_validates_range():
    spec = PillarSpec(cell_size=0.5, grid_extent=4)
    with pytest.raises(ValueError):
        DynamicGrid(stamp=0.0, probs=np.full((4, 4), 1.5), spec=spec)
    with pytest.raises(ValueError):
        DynamicGrid(stamp=0.0, probs=np.zeros((5, 5)), spec=spec)

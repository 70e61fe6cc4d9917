import numpy as np
import pytest

from dynogrid.cluster import Detection3D
from dynogrid.fusion import FusionConfig, compose_2d_measurement, fuse_detections, greedy_match
from dynogrid.grids import Detection2D
from dynogrid.tracker import NoiseParams, spawn_track


def det3(pos, stamp=1.0):
    p = np.asarray(pos, dtype=float)
    return Detection3D(centroid=p, bbox_min=p - 0.1, bbox_max=p + 0.1, point_count=10, stamp=stamp)


def det2(xy, stamp=1.0):
    return Detection2D(position=np.asarray(xy, float), cell_count=4, stamp=stamp)


def track_at(pos, tid, stamp=0.9, noise=None):
    noise = noise or NoiseParams()
    t = spawn_track(det3(pos, stamp=stamp), noise, track_id=tid)
    t.assigned = False
    return t


def id_counter(start=100):
    state = {"n": start}

    def alloc():
        state["n"] += 1
        return state["n"] - 1

    return alloc


# ---------------------------------------------------------------------------
# greedy_match


def test_greedy_single_pair_inside_gate():
    assigned = np.zeros(1, dtype=bool)
    pairs = greedy_match([np.array([0.0, 0.0])], [np.array([0.1, 0.0])], assigned, gate=0.5)
    assert pairs == [(0, 0)]
    assert assigned[0]


def test_greedy_target_outside_gate():
    assigned = np.zeros(1, dtype=bool)
    pairs = greedy_match([np.array([0.0, 0.0])], [np.array([1.0, 0.0])], assigned, gate=0.5)
    assert pairs == []
    assert not assigned[0]


def test_greedy_gate_is_strict():
    assigned = np.zeros(1, dtype=bool)
    pairs = greedy_match([np.array([0.0, 0.0])], [np.array([0.5, 0.0])], assigned, gate=0.5)
    assert pairs == []


def test_greedy_crossing_geometry_matches_exhaustive_policy():
    # brute-force enumeration of the greedy-in-source-order policy
    def oracle(sources, targets, gate):
        taken = set()
        pairs = []
        for si, s in enumerate(sources):
            best, bd = None, np.inf
            for ti, t in enumerate(targets):
                if ti in taken:
                    continue
                d = np.linalg.norm(np.asarray(s) - np.asarray(t))
                if d < bd:
                    bd, best = d, ti
            if best is not None and bd < gate:
                taken.add(best)
                pairs.append((si, best))
        return pairs

    rng = np.random.default_rng(0)
    for _ in range(200):
        ns, nt = rng.integers(0, 5), rng.integers(0, 5)
        sources = [rng.uniform(-2, 2, 2) for _ in range(ns)]
        targets = [rng.uniform(-2, 2, 2) for _ in range(nt)]
        gate = float(rng.uniform(0.3, 3.0))
        assigned = np.zeros(nt, dtype=bool)
        got = greedy_match(sources, targets, assigned, gate)
        assert got == oracle(sources, targets, gate)


def test_greedy_respects_preassigned_targets():
    assigned = np.array([True, False])
    pairs = greedy_match([np.array([0.0, 0.0])], [np.array([0.0, 0.0]), np.array([0.3, 0.0])], assigned, gate=1.0)
    assert pairs == [(0, 1)]


# ---------------------------------------------------------------------------
# compose_2d_measurement


def test_compose_measurement_takes_prior_height():
    tr = track_at([1.0, 2.0, 1.5], tid=0)
    z = compose_2d_measurement(det2([1.0, 2.0]), tr)
    np.testing.assert_array_equal(z, [1.0, 2.0, 1.5])


def test_compose_measurement_at_track_xy_equals_prior_position():
    tr = track_at([0.4, -0.7, 0.9], tid=0)
    z = compose_2d_measurement(det2([0.4, -0.7]), tr)
    np.testing.assert_allclose(z, tr.state.position())


# ---------------------------------------------------------------------------
# fuse_detections


def test_all_empty_coasts_and_counts_missed():
    noise = NoiseParams()
    tracks = [track_at([0, 0, 1], 0), track_at([2, 2, 1], 1)]
    report = fuse_detections(tracks, [], [], FusionConfig(), noise, frame_stamp=1.0)
    assert report.coasted == 2 and report.matched_3d == 0
    assert all(t.missed_frames == 1 for t in tracks)
    assert all(t.stamp == 1.0 for t in tracks)


def test_single_3d_match_updates_without_spawn():
    noise = NoiseParams()
    tracks = [track_at([0, 0, 1], 0)]
    report = fuse_detections(tracks, [det3([0.1, 0, 1])], [], FusionConfig(d_min_3d=0.5), noise, 1.0)
    assert report.matched_3d == 1 and report.spawned == 0
    assert len(tracks) == 1
    assert tracks[0].missed_frames == 0
    assert np.linalg.norm(tracks[0].state.position() - [0.1, 0, 1]) < 0.1


def test_2d_recovery_composes_measurement():
    noise = NoiseParams()
    tracks = [track_at([0, 0, 1], 0)]
    report = fuse_detections(
        tracks, [], [det2([0.05, 0.05])], FusionConfig(d_min_2d=0.5), noise, 1.0
    )
    assert report.recovered_2d == 1 and report.coasted == 0
    assert tracks[0].missed_frames == 0
    # measurement was (0.05, 0.05, prior z = 1)
    assert abs(tracks[0].state.position()[2] - 1.0) < 0.05


def test_unmatched_3d_detection_spawns():
    noise = NoiseParams()
    tracks = []
    report = fuse_detections(tracks, [det3([3, 3, 1])], [], FusionConfig(), noise, 1.0, next_id=id_counter())
    assert report.spawned == 1
    assert len(tracks) == 1 and tracks[0].id == 100


def test_2d_evidence_never_spawns():
    noise = NoiseParams()
    tracks = []
    report = fuse_detections(tracks, [], [det2([1, 1])], FusionConfig(), noise, 1.0)
    assert report.spawned == 0 and len(tracks) == 0


def test_priority_3d_track_not_touched_by_2d():
    noise = NoiseParams()
    tracks = [track_at([0, 0, 1], 0)]
    fuse_detections(
        tracks,
        [det3([0.05, 0, 1])],
        [det2([0.0, 0.0])],
        FusionConfig(),
        noise,
        1.0,
        next_id=id_counter(),
    )
    # the 2D detection found no unassigned track, so no recovery happened
    assert tracks[0].assigned
    z = tracks[0].state.position()[2]
    assert abs(z - 1.0) < 0.05


def test_priority_sets_disjoint():
    noise = NoiseParams()
    tracks = [track_at([0, 0, 1], 0), track_at([3, 3, 1], 1)]
    report = fuse_detections(
        tracks,
        [det3([0.1, 0, 1])],
        [det2([3.05, 3.0])],
        FusionConfig(),
        noise,
        1.0,
        next_id=id_counter(),
    )
    assert report.matched_3d == 1 and report.recovered_2d == 1
    # each track updated exactly once: both assigned, neither coasted
    assert report.coasted == 0


def test_conservation_every_track_accounted():
    noise = NoiseParams()
    tracks = [track_at([i, 0, 1], i) for i in range(5)]
    tracks[4].missed_frames = 6  # will retire after coasting
    report = fuse_detections(
        tracks,
        [det3([0.1, 0, 1]), det3([8, 8, 1])],
        [det2([1.05, 0.0])],
        FusionConfig(),
        noise,
        1.0,
        next_id=id_counter(),
    )
    # 5 originals: 1 matched, 1 recovered, 3 coasted (one of them retired); 1 spawned
    assert report.matched_3d == 1
    assert report.recovered_2d == 1
    assert report.coasted == 3
    assert report.retired == 1
    ids = [t.id for t in tracks]
    assert len(ids) == len(set(ids)) == 5  # 4 survivors + 1 spawn


def test_gap_recovery_keeps_missed_at_zero_and_height():
    # scripted fixture: walker at constant height tracked through a 5-frame
    # 3D outage bridged by 2D detections
    noise = NoiseParams()
    cfg = FusionConfig()
    tracks = []
    alloc = id_counter()
    height = 1.2
    # build the track with 5 frames of 3D detections moving at 1 m/s
    for k in range(5):
        t = 0.1 * (k + 1)
        fuse_detections(tracks, [det3([1.0 * t, 0, height], stamp=t)], [], cfg, noise, t, next_id=alloc)
    tid = tracks[0].id
    # 5 frames of 2D-only evidence
    for k in range(5, 10):
        t = 0.1 * (k + 1)
        report = fuse_detections(tracks, [], [det2([1.0 * t, 0.0], stamp=t)], cfg, noise, t, next_id=alloc)
        assert report.recovered_2d == 1
        assert tracks[0].missed_frames == 0
        assert abs(tracks[0].state.position()[2] - height) < 0.05
    assert tracks[0].id == tid  # same track survived the outage


def test_full_miss_gap_coasts_then_retires():
    noise = NoiseParams()
    cfg = FusionConfig(max_missed_frames=3)
    tracks = [track_at([0, 0, 1], 0)]
    for k in range(1, 4):
        fuse_detections(tracks, [], [], cfg, noise, 0.9 + 0.1 * k)
        assert len(tracks) == 1
    fuse_detections(tracks, [], [], cfg, noise, 1.4)
    assert len(tracks) == 0


def test_fusion_report_serializes():
    noise = NoiseParams()
    tracks = [track_at([0, 0, 1], 0)]
    report = fuse_detections(tracks, [det3([0.1, 0, 1])], [], FusionConfig(), noise, 1.0)
    d = report.to_dict()
    assert d["matched_3d"] == 1 and d["t"] == 1.0


def test_config_validation():
    with pytest.raises(ValueError):
        FusionConfig(d_min_3d=0.0)
    with pytest.raises(ValueError):
        FusionConfig(max_missed_frames=-1)

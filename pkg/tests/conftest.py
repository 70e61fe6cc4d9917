import pytest

from dynogrid.scenes import toy_pipeline_config  # noqa: F401  (used by test modules)
from dynogrid.simworld import build_scene, simulate_frames


@pytest.fixture(scope="session")
def brush_frames():
    """The proximity scenario, simulated once per session."""
    from dynogrid.scenes import wall_brush_scene

    scene = build_scene(wall_brush_scene())
    return list(simulate_frames(scene, seconds=9.5, seed=4))


@pytest.fixture(scope="session")
def circle_frames():
    """Walker circling an empty room; training fixture."""
    from dynogrid.scenes import circling_walker_scene

    scene = build_scene(circling_walker_scene(speed=1.0, laps=4.0))
    return list(simulate_frames(scene, seconds=60.0, seed=11))

import numpy as np
import pytest

from vlptrack.camshift import CamshiftParams
from vlptrack.detector import DetectorParams, LampIdTable
from vlptrack.geometry import CameraIntrinsics, WorldPoint
from vlptrack.pipeline import PipelineConfig
from vlptrack.scene import LampSpec, SceneConfig, Trajectory

# Small sensor for fast unit tests: 640x480 @ 10 um, f = 4 mm.
# At H = 150 cm one pixel spans 0.375 cm on the lamp plane and a 10 cm
# lamp is a 27 px disc. Acceptance tests use the full 2048x1536 geometry.
SMALL_INTR = CameraIntrinsics(0.004, 1e-5, 1e-5, (320.0, 240.0), 640, 480)

LAMP1 = LampSpec(1, WorldPoint(100.0, 45.0, 190.0), 10.0, stripe_period_rows=16)
LAMP2 = LampSpec(2, WorldPoint(100.0, 145.0, 190.0), 10.0, stripe_period_rows=24)
TUBE = LampSpec(0, WorldPoint(55.0, 95.0, 190.0), 12.0, stripe_period_rows=None)


def make_scene(lamps=None, waypoints=None, speed=15.0, noise_sigma=0.0,
               occlusions=(), seed=3, intr=SMALL_INTR, duration_s=None,
               fps=46.0):
    if lamps is None:
        lamps = [LAMP1, LAMP2]
    if waypoints is None:
        waypoints = [WorldPoint(85.0, 95.0, 40.0), WorldPoint(115.0, 95.0, 40.0)]
    traj = Trajectory([WorldPoint(*w) for w in waypoints], speed,
                      duration_s=duration_s)
    return SceneConfig(intr, list(lamps), traj, occlusions=list(occlusions),
                       noise_sigma=noise_sigma, seed=seed, fps=fps)


def make_pipeline_config(intr=SMALL_INTR, start_hint_mode="ukf", **overrides):
    defaults = dict(
        intrinsics=intr,
        lamp_positions={1: LAMP1.position, 2: LAMP2.position},
        wanted=(1, 2),
        id_table=LampIdTable({16.0: 1, 24.0: 2}),
        detector=DetectorParams(),
        camshift=CamshiftParams(),
        start_hint_mode=start_hint_mode,
    )
    defaults.update(overrides)
    return PipelineConfig(**defaults)


def render_run(scene, n=None):
    """Materialize (frames, truths) from a scene, optionally truncated."""
    from vlptrack.scene import generate_sequence
    frames, truths = [], []
    for frame, truth in generate_sequence(scene):
        frames.append(frame)
        truths.append(truth)
        if n is not None and len(frames) >= n:
            break
    return frames, truths


@pytest.fixture(scope="session")
def small_noiseless_run():
    """40 noiseless small-sensor frames of the two tracked lamps."""
    scene = make_scene(noise_sigma=0.0)
    return (scene, *render_run(scene, 40))


@pytest.fixture(scope="session")
def small_noisy_frame():
    scene = make_scene(lamps=[LAMP1, LAMP2, TUBE], noise_sigma=2.0, seed=11)
    frames, truths = render_run(scene, 1)
    return scene, frames[0], truths[0]


@pytest.fixture
def rng():
    return np.random.default_rng(1234)

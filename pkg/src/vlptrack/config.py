"""Shared JSON configuration schema for the simulator, tracker, and CLI.

One document configures everything: a ``scene`` section (what the
simulator renders; the tracker reads the camera and lamp constants from
it too) and an optional ``tracker`` section for algorithm parameters.
Unknown keys are rejected so typos fail fast, and the document carries a
``schema_version`` field.

Human-facing units: focal length in mm, pixel pitch in um, world
coordinates in cm. The builders convert to the internal conventions.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, ValidationError

from .camshift import CamshiftParams
from .detector import DetectorParams, LampIdTable
from .errors import SchemaError
from .geometry import CameraIntrinsics, WorldPoint
from .pipeline import PipelineConfig
from .scene import LampSpec, OcclusionEvent, SceneConfig, Trajectory
from .ukf import NoiseModel, UtParams


class _Model(BaseModel):
    model_config = ConfigDict(extra="forbid")


class CameraSection(_Model):
    focal_length_mm: float = 4.0
    pixel_pitch_um: tuple[float, float] = (3.2, 3.2)
    resolution: tuple[int, int] = (2048, 1536)
    principal_point: tuple[float, float] | None = None  # defaults to center


class LampSection(_Model):
    id: int
    position: tuple[float, float, float]
    radius_cm: float = 10.0
    stripe_period_rows: int | None = None
    on_intensity: int = 250
    off_intensity: int = 150


class TrajectorySection(_Model):
    waypoints: list[tuple[float, float, float]]
    speed_cm_s: float = 15.0
    duration_s: float | None = None


class OcclusionSection(_Model):
    lamp_id: int
    frame_range: tuple[int, int]
    target_fraction: float
    side: Literal["left", "right", "top", "bottom"] = "left"


class SceneSection(_Model):
    seed: int = 0
    fps: float = 46.0
    noise_sigma: float = 2.0
    background_level: int = 10
    readout_rows_per_second: float = 73500.0
    vibration_amplitude_cm: float = 0.0
    vibration_freq_hz: float = 3.0
    camera: CameraSection = CameraSection()
    lamps: list[LampSection]
    trajectory: TrajectorySection
    occlusions: list[OcclusionSection] = []


class DetectorSection(_Model):
    threshold: int = 128
    min_blob_pixels: int = 50
    id_tolerance_rows: float = 1.5


class CamshiftSection(_Model):
    bins: int = 32
    eps_px: float = 0.5
    max_iterations: int = 20
    search_margin: float = 1.5


class UkfSection(_Model):
    alpha: float = 0.5
    beta: float = 2.0
    kappa: float = 0.0
    q_diag: tuple[float, float, float, float, float, float] = (
        0.25, 0.25, 0.25, 0.25, 1.0, 1.0)
    r0_diag: tuple[float, float] = (1.0, 1.0)
    s_min: float = 1.0
    s_max: float = 100.0
    eps_rho: float = 0.05
    p0_pos: float = 4.0
    p0_vel: float = 25.0


class LossSection(_Model):
    area_ratio_threshold: float = 0.2
    frame_count: int = 5
    reacquire_frame_limit: int = 10


class TrackerSection(_Model):
    wanted_lamp_ids: tuple[int, int] = (1, 2)
    start_hint: Literal["ukf", "previous"] = "ukf"
    detector: DetectorSection = DetectorSection()
    camshift: CamshiftSection = CamshiftSection()
    ukf: UkfSection = UkfSection()
    loss: LossSection = LossSection()


class ConfigDocument(_Model):
    schema_version: Literal[1] = 1
    scene: SceneSection
    tracker: TrackerSection = TrackerSection()


def _format_loc(loc) -> str:
    parts = []
    for item in loc:
        if isinstance(item, int):
            parts[-1] += f"[{item}]"
        else:
            parts.append(str(item))
    return ".".join(parts)


def parse_config(document: dict) -> ConfigDocument:
    """Validate a raw dict; raises SchemaError naming the offending key."""
    try:
        return ConfigDocument.model_validate(document)
    except ValidationError as exc:
        first = exc.errors()[0]
        raise SchemaError(_format_loc(first["loc"]), first["msg"]) from exc


def load_config(path) -> ConfigDocument:
    try:
        with open(path, "r") as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        raise SchemaError(str(path), "config file not found") from None
    except json.JSONDecodeError as exc:
        raise SchemaError(str(path), f"invalid JSON: {exc}") from exc
    return parse_config(raw)


def dump_config(doc: ConfigDocument) -> str:
    return json.dumps(doc.model_dump(mode="json"), indent=2, sort_keys=True) + "\n"


def build_intrinsics(camera: CameraSection) -> CameraIntrinsics:
    width, height = camera.resolution
    pp = camera.principal_point or (width / 2.0, height / 2.0)
    return CameraIntrinsics(
        focal_length_m=camera.focal_length_mm * 1e-3,
        pixel_pitch_x_m=camera.pixel_pitch_um[0] * 1e-6,
        pixel_pitch_y_m=camera.pixel_pitch_um[1] * 1e-6,
        principal_point=tuple(pp),
        width=width,
        height=height,
    )


def build_scene(doc: ConfigDocument) -> SceneConfig:
    scene = doc.scene
    lamps = [LampSpec(l.id, WorldPoint(*l.position), l.radius_cm,
                      l.stripe_period_rows, l.on_intensity, l.off_intensity)
             for l in scene.lamps]
    trajectory = Trajectory([WorldPoint(*w) for w in scene.trajectory.waypoints],
                            scene.trajectory.speed_cm_s,
                            duration_s=scene.trajectory.duration_s)
    occlusions = [OcclusionEvent(o.lamp_id, o.frame_range[0], o.frame_range[1],
                                 o.target_fraction, o.side)
                  for o in scene.occlusions]
    return SceneConfig(
        intrinsics=build_intrinsics(scene.camera),
        lamps=lamps,
        trajectory=trajectory,
        occlusions=occlusions,
        noise_sigma=scene.noise_sigma,
        fps=scene.fps,
        seed=scene.seed,
        background_level=scene.background_level,
        readout_rows_per_second=scene.readout_rows_per_second,
        vibration_amplitude_cm=scene.vibration_amplitude_cm,
        vibration_freq_hz=scene.vibration_freq_hz,
    )


def build_id_table(doc: ConfigDocument) -> LampIdTable:
    periods = {float(l.stripe_period_rows): l.id
               for l in doc.scene.lamps if l.stripe_period_rows is not None}
    if not periods:
        raise SchemaError("scene.lamps", "no modulated lamps to identify")
    return LampIdTable(periods, doc.tracker.detector.id_tolerance_rows)


def build_pipeline_config(doc: ConfigDocument) -> PipelineConfig:
    tracker = doc.tracker
    positions = {l.id: WorldPoint(*l.position) for l in doc.scene.lamps}
    for lamp_id in tracker.wanted_lamp_ids:
        if lamp_id not in positions:
            raise SchemaError("tracker.wanted_lamp_ids",
                              f"lamp {lamp_id} is not defined in scene.lamps")
    noise = NoiseModel(q=np.diag(tracker.ukf.q_diag),
                       r0=np.diag(tracker.ukf.r0_diag),
                       s_min=tracker.ukf.s_min, s_max=tracker.ukf.s_max,
                       eps_rho=tracker.ukf.eps_rho,
                       p0_pos=tracker.ukf.p0_pos, p0_vel=tracker.ukf.p0_vel)
    return PipelineConfig(
        intrinsics=build_intrinsics(doc.scene.camera),
        lamp_positions=positions,
        wanted=tuple(tracker.wanted_lamp_ids),
        id_table=build_id_table(doc),
        detector=DetectorParams(tracker.detector.threshold,
                                tracker.detector.min_blob_pixels),
        camshift=CamshiftParams(tracker.camshift.bins, tracker.camshift.eps_px,
                                tracker.camshift.max_iterations,
                                tracker.camshift.search_margin),
        ut=UtParams(tracker.ukf.alpha, tracker.ukf.beta, tracker.ukf.kappa),
        noise=noise,
        loss_ratio_threshold=tracker.loss.area_ratio_threshold,
        loss_frame_count=tracker.loss.frame_count,
        reacquire_frame_limit=tracker.loss.reacquire_frame_limit,
        start_hint_mode=tracker.start_hint,
    )


def default_config_dict(noise_sigma: float = 2.0, seed: int = 7) -> dict:
    """A ready-to-run document: the experiment-platform scene constants."""
    return {
        "schema_version": 1,
        "scene": {
            "seed": seed,
            "fps": 46.0,
            "noise_sigma": noise_sigma,
            "camera": {
                "focal_length_mm": 4.0,
                "pixel_pitch_um": [3.2, 3.2],
                "resolution": [2048, 1536],
            },
            "lamps": [
                {"id": 1, "position": [100.0, 45.0, 190.0], "radius_cm": 10.0,
                 "stripe_period_rows": 16},
                {"id": 2, "position": [100.0, 145.0, 190.0], "radius_cm": 10.0,
                 "stripe_period_rows": 24},
                {"id": 0, "position": [55.0, 95.0, 190.0], "radius_cm": 12.0},
            ],
            "trajectory": {
                "waypoints": [[85.0, 95.0, 40.0], [115.0, 95.0, 40.0]],
                "speed_cm_s": 15.0,
            },
        },
        "tracker": {},
    }

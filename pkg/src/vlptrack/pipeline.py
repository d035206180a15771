"""Per-frame tracking and positioning loop.

Frame cycle: predict both lamp centroids with the filter, run one
mean-shift step per lamp from the predicted start, weigh each measurement
by its histogram similarity, fuse, then solve the double-lamp geometry on
the fused centroids. A lamp whose window area ratio stays below the loss
threshold for more than ``loss_frame_count`` consecutive frames is
declared lost; full-frame acquisition then runs for that lamp alone while
the other keeps tracking, and the whole pipeline re-acquires from scratch
only if that keeps failing.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

from . import ukf
from .camshift import (CamshiftParams, TrackState, acquire_track_state,
                       track_step)
from .detector import Blob, DetectorParams, LampIdTable, acquire
from .errors import (DegenerateGeometryError, InvalidHeightError,
                     LostTargetError, OutOfFrameError)
from .geometry import (CameraIntrinsics, LampPairGeometry, PixelPoint,
                       WorldPoint, estimate_height, locate_terminal,
                       pixel_to_image)
from .scene import Frame

TRACKING = "tracking"
LOST = "lost"
UNINITIALIZED = "uninitialized"

FIX = "fix"
ACQUIRING = "acquiring"
DEGRADED = "degraded"


@dataclass
class PipelineConfig:
    intrinsics: CameraIntrinsics
    lamp_positions: dict[int, WorldPoint]
    wanted: tuple[int, int]
    id_table: LampIdTable
    detector: DetectorParams = field(default_factory=DetectorParams)
    camshift: CamshiftParams = field(default_factory=CamshiftParams)
    ut: ukf.UtParams = field(default_factory=ukf.UtParams)
    noise: ukf.NoiseModel = field(default_factory=ukf.NoiseModel)
    loss_ratio_threshold: float = 0.2
    loss_frame_count: int = 5
    reacquire_frame_limit: int = 10
    start_hint_mode: str = "ukf"  # "ukf" or "previous"

    def __post_init__(self):
        if len(self.wanted) != 2 or self.wanted[0] == self.wanted[1]:
            raise ValueError("exactly two distinct lamp ids are required")
        for lamp_id in self.wanted:
            if lamp_id not in self.lamp_positions:
                raise ValueError(f"no world position for wanted lamp {lamp_id}")
        if not 0 < self.loss_ratio_threshold < 1:
            raise ValueError("loss_ratio_threshold must lie in (0, 1)")
        if self.loss_frame_count < 1:
            raise ValueError("loss_frame_count must be >= 1")
        if self.start_hint_mode not in ("ukf", "previous"):
            raise ValueError("start_hint_mode must be 'ukf' or 'previous'")
        a = self.lamp_positions[self.wanted[0]]
        b = self.lamp_positions[self.wanted[1]]
        self.world_separation_cm = math.hypot(a.x - b.x, a.y - b.y)
        if self.world_separation_cm <= 0:
            raise ValueError("wanted lamps must have distinct planar positions")


@dataclass
class TrackerSlot:
    lamp_id: int
    state: TrackState | None = None
    low_area_frames: int = 0
    status: str = UNINITIALIZED
    last_centroid: PixelPoint | None = None


def update_loss_state(slot: TrackerSlot, area_ratio: float,
                      threshold: float, frame_limit: int) -> bool:
    """Advance the loss counter; returns True when the slot just tripped Lost.

    The counter resets whenever the ratio recovers; loss requires strictly
    more than ``frame_limit`` consecutive low-area frames.
    """
    if area_ratio < threshold:
        slot.low_area_frames += 1
        if slot.low_area_frames > frame_limit and slot.status == TRACKING:
            slot.status = LOST
            return True
    else:
        slot.low_area_frames = 0
    return False


@dataclass
class LampObservation:
    lamp_id: int
    u: float | None
    v: float | None
    rho: float
    iterations: int = 0


def solve_double_lamp(c1, c2, config: PipelineConfig) -> tuple[float, float, float]:
    """(x, y, H) in cm from the two lamp pixel centroids.

    Raises DegenerateGeometryError / InvalidHeightError on unusable input.
    """
    img1 = pixel_to_image(c1, config.intrinsics)
    img2 = pixel_to_image(c2, config.intrinsics)
    p12 = math.hypot(img1.x - img2.x, img1.y - img2.y)
    pair = LampPairGeometry(config.world_separation_cm, p12)
    height = estimate_height(config.intrinsics.focal_length_m,
                             pair.world_separation_cm, pair.image_separation_m)
    x, y = locate_terminal(img1, img2,
                           config.lamp_positions[config.wanted[0]],
                           config.lamp_positions[config.wanted[1]],
                           height, config.intrinsics.focal_length_m)
    return x, y, height


@dataclass
class PositionFix:
    frame_index: int
    timestamp: float
    status: str
    x_cm: float | None
    y_cm: float | None
    height_cm: float | None
    stale: bool
    lamps: list[LampObservation]
    proc_ms: float | None = None


class Pipeline:
    """Stateful tracker/positioner for one frame stream."""

    def __init__(self, config: PipelineConfig):
        self.config = config
        self.slots = [TrackerSlot(lamp_id) for lamp_id in config.wanted]
        self.filter_state: ukf.JointState | None = None
        self._last_position: tuple[float, float, float] | None = None
        self._reacquire_failures = 0

    # -- public API ----------------------------------------------------

    def process_frame(self, frame: Frame) -> PositionFix:
        tracking = [slot.status == TRACKING for slot in self.slots]
        if all(tracking):
            return self._track(frame)
        if not any(tracking):
            return self._full_acquire(frame)
        return self._track_with_reacquire(frame, live=tracking.index(True),
                                          lost=tracking.index(False))

    def run(self, frames):
        """Process a frame stream; each fix carries its wall-clock proc_ms."""
        for frame in frames:
            t0 = time.perf_counter()
            fix = self.process_frame(frame)
            fix.proc_ms = (time.perf_counter() - t0) * 1e3
            yield fix

    # -- acquisition ---------------------------------------------------

    def _init_slot(self, frame: Frame, slot: TrackerSlot, blob: Blob) -> None:
        slot.state = acquire_track_state(frame.pixels, blob.centroid,
                                         blob.width / 2.0, blob.height / 2.0,
                                         self.config.camshift)
        slot.status = TRACKING
        slot.low_area_frames = 0
        slot.last_centroid = blob.centroid

    def _full_acquire(self, frame: Frame) -> PositionFix:
        found = acquire(frame, self.config.id_table, set(self.config.wanted),
                        self.config.detector)
        if len(found) < len(self.config.wanted):
            observations = [LampObservation(s.lamp_id, None, None, 0.0)
                            for s in self.slots]
            return self._stale_fix(frame, ACQUIRING, observations)
        for slot in self.slots:
            self._init_slot(frame, slot, found[slot.lamp_id])
        self.filter_state = ukf.initialize(found[self.config.wanted[0]].centroid,
                                           found[self.config.wanted[1]].centroid,
                                           self.config.noise)
        self._reacquire_failures = 0
        observations = [
            LampObservation(s.lamp_id, *found[s.lamp_id].centroid, rho=1.0)
            for s in self.slots]
        return self._geometry_fix(frame, observations)

    def _reset_lamp_in_filter(self, slot_index: int, centroid: PixelPoint) -> None:
        state = self.filter_state
        i = 2 * slot_index
        state.mean[i:i + 2] = centroid
        state.cov[i:i + 2, :] = 0.0
        state.cov[:, i:i + 2] = 0.0
        state.cov[i, i] = state.cov[i + 1, i + 1] = self.config.noise.p0_pos

    # -- tracking ------------------------------------------------------

    def _hint(self, slot_index: int, predicted: ukf.JointState) -> PixelPoint:
        if self.config.start_hint_mode == "previous":
            return self.slots[slot_index].last_centroid
        return PixelPoint(*predicted.lamp_centroid(slot_index))

    def _step_slot(self, frame: Frame, slot_index: int,
                   predicted: ukf.JointState):
        """Returns (measurement | None, rho, area_ratio, observation)."""
        slot = self.slots[slot_index]
        hint = self._hint(slot_index, predicted)
        try:
            result = track_step(frame.pixels, slot.state, hint,
                                self.config.camshift)
        except (LostTargetError, OutOfFrameError):
            return None, 0.0, 0.0, LampObservation(slot.lamp_id, None, None, 0.0)
        slot.last_centroid = result.centroid
        ratio = result.area_factor / slot.state.initial_area_factor
        obs = LampObservation(slot.lamp_id, result.centroid.u, result.centroid.v,
                              result.similarity, result.iterations)
        return result.centroid, result.similarity, ratio, obs

    def _track(self, frame: Frame) -> PositionFix:
        cfg = self.config
        predicted = ukf.predict(self.filter_state, cfg.noise.q, cfg.ut)
        measurements, scales, ratios, observations = [], [], [], []
        for i in range(2):
            z, rho, ratio, obs = self._step_slot(frame, i, predicted)
            measurements.append(z)
            scales.append(ukf.reliability_scale(rho, cfg.noise))
            ratios.append(ratio)
            observations.append(obs)
        self.filter_state, _ = ukf.update(predicted, measurements[0],
                                          measurements[1], scales[0], scales[1],
                                          cfg.noise, cfg.ut)
        tripped = False
        for i, slot in enumerate(self.slots):
            tripped |= update_loss_state(slot, ratios[i],
                                         cfg.loss_ratio_threshold,
                                         cfg.loss_frame_count)
        if tripped:
            self._reacquire_failures = 0
            return self._stale_fix(frame, DEGRADED, observations)
        return self._geometry_fix(frame, observations)

    def _track_with_reacquire(self, frame: Frame, live: int,
                              lost: int) -> PositionFix:
        cfg = self.config
        predicted = ukf.predict(self.filter_state, cfg.noise.q, cfg.ut)
        z, rho, ratio, live_obs = self._step_slot(frame, live, predicted)
        measurements = [None, None]
        measurements[live] = z
        scales = [cfg.noise.s_max, cfg.noise.s_max]
        scales[live] = ukf.reliability_scale(rho, cfg.noise)
        self.filter_state, _ = ukf.update(predicted, measurements[0],
                                          measurements[1], scales[0], scales[1],
                                          cfg.noise, cfg.ut)
        live_tripped = update_loss_state(self.slots[live], ratio,
                                         cfg.loss_ratio_threshold,
                                         cfg.loss_frame_count)

        lost_slot = self.slots[lost]
        found = acquire(frame, cfg.id_table, {lost_slot.lamp_id}, cfg.detector)
        observations = [None, None]
        observations[live] = live_obs
        if lost_slot.lamp_id in found and not live_tripped:
            blob = found[lost_slot.lamp_id]
            self._init_slot(frame, lost_slot, blob)
            self._reset_lamp_in_filter(lost, blob.centroid)
            self._reacquire_failures = 0
            observations[lost] = LampObservation(lost_slot.lamp_id,
                                                 *blob.centroid, rho=1.0)
            return self._geometry_fix(frame, observations)

        observations[lost] = LampObservation(lost_slot.lamp_id, None, None, 0.0)
        self._reacquire_failures += 1
        if self._reacquire_failures > cfg.reacquire_frame_limit or live_tripped:
            # Give up on the partial recovery; restart acquisition outright.
            for slot in self.slots:
                slot.status = UNINITIALIZED
                slot.state = None
                slot.low_area_frames = 0
            self.filter_state = None
            self._reacquire_failures = 0
        return self._stale_fix(frame, DEGRADED, observations)

    # -- fix assembly ----------------------------------------------------

    def _geometry_fix(self, frame: Frame,
                      observations: list[LampObservation]) -> PositionFix:
        try:
            x, y, height = solve_double_lamp(self.filter_state.lamp_centroid(0),
                                             self.filter_state.lamp_centroid(1),
                                             self.config)
        except (DegenerateGeometryError, InvalidHeightError):
            return self._stale_fix(frame, DEGRADED, observations)
        self._last_position = (x, y, height)
        return PositionFix(frame.frame_index, frame.timestamp, FIX,
                           x, y, height, stale=False, lamps=observations)

    def _stale_fix(self, frame: Frame, status: str,
                   observations: list[LampObservation]) -> PositionFix:
        x, y, height = self._last_position or (None, None, None)
        return PositionFix(frame.frame_index, frame.timestamp, status,
                           x, y, height, stale=True, lamps=observations)

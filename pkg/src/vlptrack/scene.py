"""Synthetic rolling-shutter scene generator with exact ground truth.

Lamps are drawn as filled discs. A modulated lamp blinks fast enough that
the row-sequential readout turns it into horizontal stripes; that physics
is collapsed to a direct model: within the disc, image row r is "on" when
floor((r + phase) / (period/2)) is even, a 50% duty square wave in row
space. The phase advances with time at the configured row readout rate,
so stripes drift across frames like they do on real sensors. Stripe
period in rows is the lamp's identity key.

Occluders are axis-aligned rectangles grown from one side of the disc
until the requested fraction of disc pixels is covered; the achieved
fraction is recorded exactly in the ground truth.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import SceneValidationError
from .geometry import CameraIntrinsics, PixelPoint, WorldPoint, image_to_pixel

MAX_SPEED_CM_S = 22.0


@dataclass(frozen=True)
class LampSpec:
    """A ceiling luminaire. ``stripe_period_rows=None`` means unmodulated."""

    id: int
    position: WorldPoint
    radius_cm: float
    stripe_period_rows: int | None = None
    on_intensity: int = 250
    off_intensity: int = 150

    def __post_init__(self):
        if self.radius_cm <= 0:
            raise SceneValidationError("lamp radius must be positive")
        if self.stripe_period_rows is not None and self.stripe_period_rows < 4:
            raise SceneValidationError("stripe_period_rows must be >= 4")
        if not 0 <= self.off_intensity < self.on_intensity <= 255:
            raise SceneValidationError(
                "need 0 <= off_intensity < on_intensity <= 255")

    @property
    def modulated(self) -> bool:
        return self.stripe_period_rows is not None


@dataclass
class Trajectory:
    """Piecewise-linear constant-speed path of the camera optical center.

    A zero-length path (single waypoint, or repeated points) is a static
    scene and needs an explicit ``duration_s``.
    """

    waypoints: list[WorldPoint]
    speed_cm_s: float
    duration_s: float | None = None

    def __post_init__(self):
        self.waypoints = [WorldPoint(*w) for w in self.waypoints]
        if not self.waypoints:
            raise SceneValidationError("trajectory needs at least one waypoint")
        if not 0 < self.speed_cm_s <= MAX_SPEED_CM_S:
            raise SceneValidationError(
                f"speed must lie in (0, {MAX_SPEED_CM_S}] cm/s")
        seg = np.diff(np.asarray(self.waypoints, dtype=float), axis=0)
        lengths = np.linalg.norm(seg, axis=1) if len(seg) else np.zeros(0)
        self._cum = np.concatenate([[0.0], np.cumsum(lengths)])
        if self.total_length_cm == 0 and self.duration_s is None:
            raise SceneValidationError(
                "a zero-length trajectory needs an explicit duration_s")

    @property
    def total_length_cm(self) -> float:
        return float(self._cum[-1])

    @property
    def duration(self) -> float:
        if self.total_length_cm > 0:
            return self.total_length_cm / self.speed_cm_s
        return float(self.duration_s)

    def position_at(self, t: float) -> WorldPoint:
        if t < -1e-9 or t > self.duration + 1e-9:
            raise ValueError(f"t={t} outside trajectory duration {self.duration}")
        if self.total_length_cm == 0:
            return self.waypoints[0]
        s = min(max(t, 0.0), self.duration) * self.speed_cm_s
        i = int(np.searchsorted(self._cum, s, side="right")) - 1
        i = min(i, len(self.waypoints) - 2)
        seg_len = self._cum[i + 1] - self._cum[i]
        frac = 0.0 if seg_len == 0 else (s - self._cum[i]) / seg_len
        a, b = self.waypoints[i], self.waypoints[i + 1]
        return WorldPoint(a.x + frac * (b.x - a.x),
                          a.y + frac * (b.y - a.y),
                          a.z + frac * (b.z - a.z))


def trajectory_position(traj: Trajectory, t: float) -> WorldPoint:
    return traj.position_at(t)


@dataclass(frozen=True)
class OcclusionEvent:
    """Partial masking of one lamp over a frame range (inclusive bounds)."""

    lamp_id: int
    frame_start: int
    frame_end: int
    target_fraction: float
    side: str = "left"

    def __post_init__(self):
        if not 0.2 <= self.target_fraction <= 0.95:
            raise SceneValidationError("target_fraction must lie in [0.2, 0.95]")
        if self.frame_end < self.frame_start:
            raise SceneValidationError("frame_end must be >= frame_start")
        if self.side not in ("left", "right", "top", "bottom"):
            raise SceneValidationError(f"unknown occlusion side {self.side!r}")

    def active(self, frame_index: int) -> bool:
        return self.frame_start <= frame_index <= self.frame_end


@dataclass
class SceneConfig:
    intrinsics: CameraIntrinsics
    lamps: list[LampSpec]
    trajectory: Trajectory
    occlusions: list[OcclusionEvent] = field(default_factory=list)
    noise_sigma: float = 2.0
    fps: float = 46.0
    seed: int = 0
    background_level: int = 10
    readout_rows_per_second: float = 73500.0
    # Platform vibration: the camera actually sits on a smooth oscillation
    # around the commanded path, while ground truth records the commanded
    # path (the way a robot logs odometry sampling points). Off by default.
    vibration_amplitude_cm: float = 0.0
    vibration_freq_hz: float = 3.0

    def __post_init__(self):
        if self.fps <= 0:
            raise SceneValidationError("fps must be positive")
        if self.noise_sigma < 0:
            raise SceneValidationError("noise_sigma must be non-negative")
        if self.vibration_amplitude_cm < 0:
            raise SceneValidationError("vibration amplitude must be non-negative")
        ids = [lamp.id for lamp in self.lamps]
        if len(set(ids)) != len(ids):
            raise SceneValidationError("lamp ids must be unique")

    @property
    def frame_count(self) -> int:
        return max(1, math.ceil(self.fps * self.trajectory.duration - 1e-9))

    def frame_time(self, frame_index: int) -> float:
        return frame_index / self.fps

    def camera_position(self, t: float) -> WorldPoint:
        """Where the camera actually is at time t (vibration included)."""
        pos = self.trajectory.position_at(t)
        if self.vibration_amplitude_cm == 0:
            return pos
        phase = np.random.default_rng([self.seed, 24251]).uniform(0, 2 * np.pi, 2)
        w = 2 * np.pi * self.vibration_freq_hz
        return WorldPoint(
            pos.x + self.vibration_amplitude_cm * math.sin(w * t + phase[0]),
            pos.y + self.vibration_amplitude_cm * math.sin(1.27 * w * t + phase[1]),
            pos.z)


@dataclass
class Frame:
    width: int
    height: int
    pixels: np.ndarray
    timestamp: float
    frame_index: int


@dataclass
class LampTruth:
    centroid: PixelPoint | None
    radius_px: float
    visible_area_fraction: float
    in_view: bool


@dataclass
class GroundTruth:
    frame_index: int
    timestamp: float
    terminal_position: WorldPoint
    lamps: dict[int, LampTruth]


def project_lamp(lamp: LampSpec, camera_pos: WorldPoint,
                 intr: CameraIntrinsics) -> tuple[PixelPoint, float] | None:
    """Pinhole projection of a lamp disc: (centroid px, radius px).

    Returns None when the disc lies fully outside the frame. The lamp must
    be above the camera.
    """
    height_cm = lamp.position.z - camera_pos.z
    if height_cm <= 0:
        raise ValueError(f"lamp {lamp.id} is not above the camera")
    f = intr.focal_length_m
    img_x = -f * (lamp.position.x - camera_pos.x) / height_cm
    img_y = -f * (lamp.position.y - camera_pos.y) / height_cm
    centroid = image_to_pixel((img_x, img_y), intr)
    radius_px = f * lamp.radius_cm / (height_cm * intr.pixel_pitch_x_m)
    if (centroid.u + radius_px < 0 or centroid.u - radius_px > intr.width - 1
            or centroid.v + radius_px < 0 or centroid.v - radius_px > intr.height - 1):
        return None
    return centroid, radius_px


def _stripe_rows(lamp: LampSpec, rows: np.ndarray, t: float,
                 readout_rows_per_second: float) -> np.ndarray:
    """Per-row intensity of a modulated lamp at time t."""
    half_period = lamp.stripe_period_rows / 2.0
    phase = t * readout_rows_per_second
    on = (np.floor((rows + phase) / half_period).astype(np.int64) % 2) == 0
    return np.where(on, lamp.on_intensity, lamp.off_intensity)


def _occlusion_cut(disc: np.ndarray, side: str, target: float) -> tuple[np.ndarray, float]:
    """Mask of occluded disc pixels grown from one side, and the achieved fraction."""
    total = int(disc.sum())
    if side in ("left", "right"):
        counts = disc.sum(axis=0)
        axis_len = disc.shape[1]
    else:
        counts = disc.sum(axis=1)
        axis_len = disc.shape[0]
    if side in ("right", "bottom"):
        counts = counts[::-1]
    fracs = np.cumsum(counts) / total
    cut = int(np.argmin(np.abs(fracs - target)))
    achieved = float(fracs[cut])
    keep = np.zeros(axis_len, dtype=bool)
    keep[:cut + 1] = True
    if side in ("right", "bottom"):
        keep = keep[::-1]
    if side in ("left", "right"):
        occluded = disc & keep[None, :]
    else:
        occluded = disc & keep[:, None]
    return occluded, achieved


def render_frame(scene: SceneConfig, t: float,
                 frame_index: int | None = None) -> tuple[Frame, GroundTruth]:
    """Render the scene at time t with its exact ground truth record.

    Ground truth records the unoccluded disc centroid (the continuous
    projection, not the rasterized one) and the exact visible-area
    fraction after occlusion masking.
    """
    if frame_index is None:
        frame_index = int(round(t * scene.fps))
    if t < -1e-9 or t > scene.trajectory.duration + 1e-9:
        raise ValueError(f"t={t} outside trajectory duration")
    intr = scene.intrinsics
    # lamps are drawn from where the camera actually is; the recorded
    # terminal truth is the commanded path, so vibration becomes a
    # positioning error source common to every method, per-lamp image
    # truth stays exact
    cam = scene.camera_position(t)
    recorded = scene.trajectory.position_at(t)
    img = np.full((intr.height, intr.width), scene.background_level, dtype=np.float64)

    truths: dict[int, LampTruth] = {}
    for lamp in scene.lamps:
        projected = project_lamp(lamp, cam, intr)
        if projected is None:
            truths[lamp.id] = LampTruth(None, 0.0, 0.0, False)
            continue
        centroid, radius_px = projected
        c0 = max(int(math.floor(centroid.u - radius_px)), 0)
        c1 = min(int(math.ceil(centroid.u + radius_px)), intr.width - 1)
        r0 = max(int(math.floor(centroid.v - radius_px)), 0)
        r1 = min(int(math.ceil(centroid.v + radius_px)), intr.height - 1)
        rows = np.arange(r0, r1 + 1)
        cols = np.arange(c0, c1 + 1)
        disc = ((cols[None, :] - centroid.u) ** 2
                + (rows[:, None] - centroid.v) ** 2) <= radius_px ** 2
        if lamp.modulated:
            levels = _stripe_rows(lamp, rows.astype(float), t,
                                  scene.readout_rows_per_second)
            patch_vals = np.broadcast_to(levels[:, None].astype(np.float64),
                                         disc.shape)
        else:
            patch_vals = np.full(disc.shape, float(lamp.on_intensity))
        patch = img[r0:r1 + 1, c0:c1 + 1]
        patch[disc] = patch_vals[disc]

        occluded = np.zeros_like(disc)
        for event in scene.occlusions:
            if event.lamp_id == lamp.id and event.active(frame_index):
                cut, _ = _occlusion_cut(disc, event.side, event.target_fraction)
                occluded |= cut
        total = int(disc.sum())
        if occluded.any():
            patch[occluded] = scene.background_level
            visible_fraction = 1.0 - occluded.sum() / total
        else:
            visible_fraction = 1.0
        truths[lamp.id] = LampTruth(centroid, radius_px, float(visible_fraction), True)

    if scene.noise_sigma > 0:
        rng = np.random.default_rng([scene.seed, frame_index])
        img += scene.noise_sigma * rng.standard_normal(img.shape)
    pixels = np.clip(np.rint(img), 0, 255).astype(np.uint8)
    frame = Frame(intr.width, intr.height, pixels, t, frame_index)
    truth = GroundTruth(frame_index, t, recorded, truths)
    return frame, truth


def validate_scene(scene: SceneConfig) -> None:
    """Reject scenes where lamp discs overlap in any frame."""
    for i in range(scene.frame_count):
        cam = scene.camera_position(scene.frame_time(i))
        visible = []
        for lamp in scene.lamps:
            try:
                projected = project_lamp(lamp, cam, scene.intrinsics)
            except ValueError as exc:
                raise SceneValidationError(f"frame {i}: {exc}") from exc
            if projected is not None:
                visible.append((lamp.id, *projected))
        for a in range(len(visible)):
            for b in range(a + 1, len(visible)):
                id_a, ca, ra = visible[a]
                id_b, cb, rb = visible[b]
                if math.hypot(ca.u - cb.u, ca.v - cb.v) <= ra + rb:
                    raise SceneValidationError(
                        f"frame {i}: lamp discs {id_a} and {id_b} overlap")


def generate_sequence(scene: SceneConfig):
    """Yield (Frame, GroundTruth) over the whole trajectory at 1/fps spacing."""
    validate_scene(scene)
    for i in range(scene.frame_count):
        yield render_frame(scene, scene.frame_time(i), frame_index=i)

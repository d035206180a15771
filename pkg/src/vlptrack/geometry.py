"""Camera model, double-lamp position solver, and error statistics.

Unit conventions, shared by every module downstream:

  world coordinates    centimeters, axes parallel to the image axes
  sensor-plane points  meters, origin at the principal point
  pixel coordinates    dimensionless columns/rows, sub-pixel precision

The camera looks straight up at the lamp plane (zero roll/pitch/yaw), so
a lamp offset of ``d`` cm at distance ``H`` cm images at ``-f*d/H`` meters
on the sensor: the projection inverts through the optical center.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .errors import DegenerateGeometryError, InvalidHeightError


class PixelPoint(NamedTuple):
    u: float
    v: float


class ImagePoint(NamedTuple):
    """Point on the sensor plane in meters, origin at the principal point."""

    x: float
    y: float


class WorldPoint(NamedTuple):
    """Point in the platform frame, centimeters."""

    x: float
    y: float
    z: float


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics of the rolling-shutter camera.

    ``pixel_pitch_*`` are the photosite sizes in meters per pixel; they
    need not be equal. The principal point may sit off the sensor center
    but must lie inside the frame.
    """

    focal_length_m: float
    pixel_pitch_x_m: float
    pixel_pitch_y_m: float
    principal_point: tuple[float, float]
    width: int
    height: int

    def __post_init__(self):
        if self.focal_length_m <= 0:
            raise ValueError("focal_length_m must be positive")
        if self.pixel_pitch_x_m <= 0 or self.pixel_pitch_y_m <= 0:
            raise ValueError("pixel pitches must be positive")
        u0, v0 = self.principal_point
        if not (0 <= u0 < self.width and 0 <= v0 < self.height):
            raise ValueError("principal_point must lie inside the frame")


@dataclass(frozen=True)
class LampPairGeometry:
    """Separation of one lamp pair in the world and on the sensor."""

    world_separation_cm: float
    image_separation_m: float

    def __post_init__(self):
        if self.world_separation_cm <= 0:
            raise ValueError("world_separation_cm must be positive")
        if self.image_separation_m <= 0:
            raise DegenerateGeometryError("lamps coincide on the sensor")


def pixel_to_image(p: PixelPoint, intr: CameraIntrinsics) -> ImagePoint:
    """Pixel coordinates to sensor-plane meters. Exact inverse of image_to_pixel."""
    u0, v0 = intr.principal_point
    return ImagePoint((p[0] - u0) * intr.pixel_pitch_x_m,
                      (p[1] - v0) * intr.pixel_pitch_y_m)


def image_to_pixel(pt: ImagePoint, intr: CameraIntrinsics) -> PixelPoint:
    """Sensor-plane meters to pixel coordinates. Exact inverse of pixel_to_image."""
    u0, v0 = intr.principal_point
    return PixelPoint(pt[0] / intr.pixel_pitch_x_m + u0,
                      pt[1] / intr.pixel_pitch_y_m + v0)


def estimate_height(focal_length_m: float, world_separation_cm: float,
                    image_separation_m: float) -> float:
    """Camera-to-lamp-plane distance in cm from one known lamp separation.

    Similar triangles: the lamp pair spans ``d12`` cm at distance ``H``
    and ``p12`` meters on the sensor at distance ``f``, so H = f*d12/p12.
    """
    if focal_length_m <= 0:
        raise ValueError("focal_length_m must be positive")
    if world_separation_cm <= 0:
        raise ValueError("world_separation_cm must be positive")
    if image_separation_m <= 0:
        raise DegenerateGeometryError(
            "image separation must be positive (lamps coincide on the sensor)")
    return focal_length_m * world_separation_cm / image_separation_m


def locate_terminal(img_a: ImagePoint, img_b: ImagePoint,
                    lamp_a: WorldPoint, lamp_b: WorldPoint,
                    height_cm: float, focal_length_m: float) -> tuple[float, float]:
    """Planar terminal position (cm) from two tracked lamp image points.

    ``img_a``/``img_b`` are the sensor-plane points produced by
    ``pixel_to_image`` (so they carry the pinhole inversion: a lamp on the
    camera's -x side images at +x). Averaging both similar-triangle
    relations gives

        x = (xa + xb)/2 + H * (ia + ib) / (2 f)

    and likewise for y, which recovers the camera position exactly in
    noiseless geometry.
    """
    if height_cm <= 0:
        raise InvalidHeightError("height must be positive")
    lamps_distinct = (lamp_a[0], lamp_a[1]) != (lamp_b[0], lamp_b[1])
    if lamps_distinct and math.hypot(img_a[0] - img_b[0], img_a[1] - img_b[1]) < 1e-15:
        raise DegenerateGeometryError(
            "distinct lamps cannot image at the same sensor point")
    x = (lamp_a[0] + lamp_b[0]) / 2 + height_cm * (img_a[0] + img_b[0]) / (2 * focal_length_m)
    y = (lamp_a[1] + lamp_b[1]) / 2 + height_cm * (img_a[1] + img_b[1]) / (2 * focal_length_m)
    return x, y


def tracking_error(p: Sequence[float], p_actual: Sequence[float]) -> float:
    """Planar distance in cm between an estimate and the actual position."""
    return math.hypot(p[0] - p_actual[0], p[1] - p_actual[1])


def positioning_error_3d(p: Sequence[float], p_actual: Sequence[float]) -> float:
    """Euclidean distance in cm between 3-D position estimates."""
    return math.sqrt((p[0] - p_actual[0]) ** 2
                     + (p[1] - p_actual[1]) ** 2
                     + (p[2] - p_actual[2]) ** 2)


class EmpiricalCdf:
    """Step CDF of a finite sample: F(x) = #{samples <= x} / N."""

    def __init__(self, samples: Sequence[float]):
        arr = np.asarray(samples, dtype=float)
        if arr.size == 0:
            raise ValueError("empty sample set")
        if not np.all(np.isfinite(arr)):
            raise ValueError("samples must be finite")
        self.sorted = np.sort(arr)
        self.n = arr.size

    def __call__(self, x: float) -> float:
        return float(np.searchsorted(self.sorted, x, side="right")) / self.n

    def table(self) -> list[tuple[float, float]]:
        """(x, F(x)) pairs at the sample points, suitable for CSV output."""
        xs = np.unique(self.sorted)
        return [(float(x), self(float(x))) for x in xs]


def empirical_cdf(samples: Sequence[float]) -> EmpiricalCdf:
    return EmpiricalCdf(samples)


def percentile(samples: Sequence[float], q: float) -> float:
    """Smallest sample value whose empirical CDF reaches ``q``.

    No interpolation: the result is always one of the samples.
    """
    if not 0 < q <= 1:
        raise ValueError("quantile must lie in (0, 1]")
    arr = np.sort(np.asarray(samples, dtype=float))
    if arr.size == 0:
        raise ValueError("empty sample set")
    # ceil(q*n) samples must lie at or below the answer; the 1e-9 guards
    # against float fuzz like 0.9*10 = 9.000000000000002.
    k = max(1, math.ceil(q * arr.size - 1e-9))
    return float(arr[k - 1])

"""Full-frame lamp acquisition: blob detection and stripe-period decoding.

Detection thresholds sit below the dim half of the stripe pattern, so a
striped disc stays one connected component and its bounding box is stable
against stripe phase. Identification estimates the stripe period from
the autocorrelation of the blob's column-averaged row profile and looks
it up in the configured period table; sources with a flat profile are
classified as unmodulated interference and never handed to tracking.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .geometry import PixelPoint
from .scene import Frame

UNMODULATED = "unmodulated"
UNKNOWN = "unknown"

FOUR_CONNECTED = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=int)

# Blobs shorter than this can't carry a measurable stripe pattern.
MIN_DECODE_ROWS = 8
# Normalized autocorrelation a peak must reach to count as periodic.
AUTOCORR_FLOOR = 0.25
# Profile coefficient of variation below this is a constant source.
FLATNESS_FLOOR = 0.05


@dataclass
class DetectorParams:
    threshold: int = 128
    min_blob_pixels: int = 50


@dataclass
class Blob:
    """One bright connected component. Bounds are inclusive pixel indices."""

    col_min: int
    row_min: int
    col_max: int
    row_max: int
    pixel_count: int
    centroid: PixelPoint
    mean_intensity: float

    @property
    def width(self) -> int:
        return self.col_max - self.col_min + 1

    @property
    def height(self) -> int:
        return self.row_max - self.row_min + 1


@dataclass
class LampIdTable:
    """stripe period (rows) -> lamp id, with a matching tolerance in rows."""

    period_to_id: dict[float, int]
    tolerance_rows: float = 1.5

    def __post_init__(self):
        periods = sorted(self.period_to_id)
        for a, b in zip(periods, periods[1:]):
            if b - a <= 2 * self.tolerance_rows:
                raise ValueError(
                    f"periods {a} and {b} are closer than twice the tolerance")

    def lookup(self, period: float) -> int | None:
        for p, lamp_id in self.period_to_id.items():
            if abs(period - p) <= self.tolerance_rows:
                return lamp_id
        return None


def detect_blobs(frame: Frame, threshold: int = 128,
                 min_blob_pixels: int = 50) -> list[Blob]:
    """4-connected components of pixels >= threshold, largest first.

    Centroids are intensity-weighted over the component pixels.
    """
    if not 0 < threshold < 255:
        raise ValueError("threshold must lie in (0, 255)")
    pixels = frame.pixels
    mask = pixels >= threshold
    labels, n = ndimage.label(mask, structure=FOUR_CONNECTED)
    if n == 0:
        return []
    counts = np.bincount(labels.ravel(), minlength=n + 1)
    rows, cols = np.nonzero(mask)
    component = labels[rows, cols]
    intensity = pixels[rows, cols].astype(np.float64)
    w_sum = np.bincount(component, weights=intensity, minlength=n + 1)
    u_sum = np.bincount(component, weights=intensity * cols, minlength=n + 1)
    v_sum = np.bincount(component, weights=intensity * rows, minlength=n + 1)
    boxes = ndimage.find_objects(labels)

    blobs = []
    for k in range(1, n + 1):
        if counts[k] < min_blob_pixels:
            continue
        rs, cs = boxes[k - 1]
        blobs.append(Blob(
            col_min=cs.start, row_min=rs.start,
            col_max=cs.stop - 1, row_max=rs.stop - 1,
            pixel_count=int(counts[k]),
            centroid=PixelPoint(u_sum[k] / w_sum[k], v_sum[k] / w_sum[k]),
            mean_intensity=float(w_sum[k] / counts[k]),
        ))
    blobs.sort(key=lambda b: b.pixel_count, reverse=True)
    return blobs


def _row_profile(frame: Frame, blob: Blob) -> np.ndarray:
    """Column-averaged intensity per row over the blob's own pixels.

    Membership uses a threshold relative to the patch mean rather than the
    detection threshold, so the profile survives global intensity scaling.
    Rows with no member pixels are dropped.
    """
    patch = frame.pixels[blob.row_min:blob.row_max + 1,
                         blob.col_min:blob.col_max + 1].astype(np.float64)
    member = patch >= 0.5 * patch.mean()
    counts = member.sum(axis=1)
    sums = (patch * member).sum(axis=1)
    valid = counts > 0
    return sums[valid] / counts[valid]


def estimate_stripe_period(profile: np.ndarray) -> float | None:
    """Dominant period of a row profile via its first autocorrelation peak.

    Returns None when no significant peak exists. Sub-row precision comes
    from a parabolic fit around the peak lag.
    """
    n = profile.size
    centered = profile - profile.mean()
    denom = float(centered @ centered)
    if denom <= 0:
        return None
    ac = np.correlate(centered, centered, mode="full")[n - 1:] / denom
    max_lag = n // 2
    for lag in range(3, max_lag):
        if ac[lag] < AUTOCORR_FLOOR:
            continue
        if ac[lag] >= ac[lag - 1] and ac[lag] >= ac[lag + 1]:
            a, b, c = ac[lag - 1], ac[lag], ac[lag + 1]
            curvature = a - 2 * b + c
            delta = 0.0 if curvature == 0 else 0.5 * (a - c) / curvature
            return lag + float(np.clip(delta, -0.5, 0.5))
    return None


def decode_led_id(frame: Frame, blob: Blob, table: LampIdTable) -> int | str:
    """Classify a blob: a known lamp id, UNMODULATED, or UNKNOWN.

    A blob must span at least two stripe periods of rows to decode (the
    autocorrelation search range enforces this). A profile with near-zero
    variation is an unmodulated source.
    """
    if blob.height < MIN_DECODE_ROWS:
        return UNKNOWN
    profile = _row_profile(frame, blob)
    if profile.size < MIN_DECODE_ROWS:
        return UNKNOWN
    if profile.std() / max(profile.mean(), 1.0) < FLATNESS_FLOOR:
        return UNMODULATED
    period = estimate_stripe_period(profile)
    if period is None:
        return UNKNOWN
    lamp_id = table.lookup(period)
    return lamp_id if lamp_id is not None else UNKNOWN


def acquire(frame: Frame, table: LampIdTable, wanted: set[int],
            params: DetectorParams | None = None) -> dict[int, Blob]:
    """Detect and identify the wanted lamps in one frame.

    Returns whatever subset was found; acquisition is complete when every
    wanted id is present. Unmodulated and unknown sources are never
    returned. If two blobs decode to the same id the larger one wins.
    """
    if params is None:
        params = DetectorParams()
    result: dict[int, Blob] = {}
    for blob in detect_blobs(frame, params.threshold, params.min_blob_pixels):
        decoded = decode_led_id(frame, blob, table)
        if isinstance(decoded, int) and decoded in wanted and decoded not in result:
            result[decoded] = blob
        if set(result) == wanted:
            break
    return result

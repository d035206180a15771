"""Adaptive mean-shift tracking on intensity-histogram backprojection.

The target model is a kernel-weighted grayscale histogram (the frames are
monochrome, so hue is meaningless here). Each frame we backproject the
model over a search region around a predicted start point, run mean shift
to the local density mode, resize the window from the zeroth moment, and
score the converged window against the frozen reference histogram with
the Bhattacharyya coefficient. That coefficient doubles as the tracking
reliability handed to the filter.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import IncompatibleHistogramError, LostTargetError, OutOfFrameError
from .geometry import PixelPoint

MIN_HALF_EXTENT = 4.0


@dataclass
class CamshiftParams:
    bins: int = 32
    eps_px: float = 0.5
    max_iterations: int = 20
    search_margin: float = 1.5


@dataclass
class IntensityHistogram:
    """Normalized histogram over [0, 255] intensity."""

    weights: np.ndarray

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        if self.weights.ndim != 1:
            raise ValueError("histogram weights must be one-dimensional")
        if np.any(self.weights < 0):
            raise ValueError("histogram weights must be non-negative")
        total = self.weights.sum()
        if abs(total - 1.0) > 1e-9:
            raise ValueError("histogram weights must sum to 1")

    @property
    def bin_count(self) -> int:
        return self.weights.size


@dataclass
class SearchWindow:
    """Elliptically-weighted rectangular window, clipped to the frame on use."""

    cx: float
    cy: float
    half_width: float
    half_height: float

    def __post_init__(self):
        if self.half_width < MIN_HALF_EXTENT or self.half_height < MIN_HALF_EXTENT:
            raise ValueError(f"half extents must be >= {MIN_HALF_EXTENT} px")


@dataclass
class WeightMap:
    """Backprojection weights over a frame sub-rectangle."""

    values: np.ndarray
    col0: int
    row0: int


@dataclass
class TrackState:
    """Per-lamp tracker memory.

    The reference histogram and its window size are frozen at acquisition;
    ``window`` is the adaptive search window carried frame to frame.
    """

    reference: IntensityHistogram
    ref_half_width: float
    ref_half_height: float
    window: SearchWindow
    initial_area_factor: float
    last_similarity: float = 1.0


@dataclass
class TrackResult:
    centroid: PixelPoint
    window: SearchWindow
    area_factor: float
    iterations: int
    similarity: float


def _window_bounds(cx: float, cy: float, half_w: float, half_h: float,
                   width: int, height: int) -> tuple[int, int, int, int] | None:
    """Inclusive integer pixel bounds (c0, c1, r0, r1), or None if empty."""
    c0 = max(int(math.ceil(cx - half_w)), 0)
    c1 = min(int(math.floor(cx + half_w)), width - 1)
    r0 = max(int(math.ceil(cy - half_h)), 0)
    r1 = min(int(math.floor(cy + half_h)), height - 1)
    if c0 > c1 or r0 > r1:
        return None
    return c0, c1, r0, r1


def bin_indices(pixels: np.ndarray, bins: int) -> np.ndarray:
    """Map 8-bit intensities to histogram bins."""
    return (pixels.astype(np.int32) * bins) >> 8


def build_histogram(frame: np.ndarray, window: SearchWindow,
                    bins: int = 32) -> IntensityHistogram:
    """Kernel-weighted intensity histogram of the window contents.

    Pixels are weighted by the Epanechnikov profile k(r^2) = max(0, 1 - r^2)
    with r the elliptical distance to the window center normalized by the
    half extents, so corners (and anything outside the inscribed ellipse)
    contribute nothing.
    """
    height, width = frame.shape
    bounds = _window_bounds(window.cx, window.cy, window.half_width,
                            window.half_height, width, height)
    if bounds is None:
        raise OutOfFrameError("window does not overlap the frame")
    c0, c1, r0, r1 = bounds
    patch = frame[r0:r1 + 1, c0:c1 + 1]
    cols = (np.arange(c0, c1 + 1) - window.cx) / window.half_width
    rows = (np.arange(r0, r1 + 1) - window.cy) / window.half_height
    r_sq = rows[:, None] ** 2 + cols[None, :] ** 2
    kernel = np.clip(1.0 - r_sq, 0.0, None)
    total = kernel.sum()
    if total <= 0:
        raise OutOfFrameError("window retains no kernel support inside the frame")
    idx = bin_indices(patch, bins)
    weights = np.bincount(idx.ravel(), weights=kernel.ravel(), minlength=bins)
    return IntensityHistogram(weights / total)


def backproject(frame: np.ndarray, rect: tuple[int, int, int, int],
                hist: IntensityHistogram) -> WeightMap:
    """Histogram weight of every pixel in ``rect`` = (c0, r0, c1, r1) inclusive."""
    height, width = frame.shape
    c0 = max(rect[0], 0)
    r0 = max(rect[1], 0)
    c1 = min(rect[2], width - 1)
    r1 = min(rect[3], height - 1)
    if c0 > c1 or r0 > r1:
        raise OutOfFrameError("backprojection region does not overlap the frame")
    patch = frame[r0:r1 + 1, c0:c1 + 1]
    values = hist.weights[bin_indices(patch, hist.bin_count)]
    return WeightMap(values, c0, r0)


class _Moments:
    """Integral images over a weight map for O(1) box moments."""

    def __init__(self, wmap: WeightMap):
        v = wmap.values
        h, w = v.shape
        cols = wmap.col0 + np.arange(w, dtype=float)
        rows = wmap.row0 + np.arange(h, dtype=float)
        self.col0, self.row0 = wmap.col0, wmap.row0
        self.w, self.h = w, h
        self.s00 = np.zeros((h + 1, w + 1))
        self.s10 = np.zeros((h + 1, w + 1))
        self.s01 = np.zeros((h + 1, w + 1))
        self.s00[1:, 1:] = v.cumsum(0).cumsum(1)
        self.s10[1:, 1:] = (v * cols[None, :]).cumsum(0).cumsum(1)
        self.s01[1:, 1:] = (v * rows[:, None]).cumsum(0).cumsum(1)

    def box(self, cx: float, cy: float, half_w: float,
            half_h: float) -> tuple[float, float, float] | None:
        """(M00, M10, M01) over the window, or None when the overlap is empty."""
        c0 = max(int(math.ceil(cx - half_w)) - self.col0, 0)
        c1 = min(int(math.floor(cx + half_w)) - self.col0, self.w - 1)
        r0 = max(int(math.ceil(cy - half_h)) - self.row0, 0)
        r1 = min(int(math.floor(cy + half_h)) - self.row0, self.h - 1)
        if c0 > c1 or r0 > r1:
            return None

        def rect(s):
            return s[r1 + 1, c1 + 1] - s[r0, c1 + 1] - s[r1 + 1, c0] + s[r0, c0]

        return float(rect(self.s00)), float(rect(self.s10)), float(rect(self.s01))


def _shift_to_mode(moments: _Moments, start: PixelPoint, half_width: float,
                   half_height: float, max_iter: int,
                   eps_px: float) -> tuple[PixelPoint, int]:
    cx, cy = float(start[0]), float(start[1])
    iterations = 0
    while iterations < max_iter:
        box = moments.box(cx, cy, half_width, half_height)
        if box is None or box[0] <= 0:
            raise LostTargetError("no backprojection mass under the search window")
        m00, m10, m01 = box
        nx, ny = m10 / m00, m01 / m00
        shift = math.hypot(nx - cx, ny - cy)
        cx, cy = nx, ny
        iterations += 1
        if shift < eps_px:
            break
    return PixelPoint(cx, cy), iterations


def mean_shift(wmap: WeightMap, start: PixelPoint, half_width: float,
               half_height: float, max_iter: int = 20,
               eps_px: float = 0.5) -> tuple[PixelPoint, int]:
    """Iterate the window to the centroid of its weights until it settles.

    Returns the converged mode and the number of relocation steps taken.
    Raises LostTargetError when the window holds no weight mass.
    """
    return _shift_to_mode(_Moments(wmap), start, half_width, half_height,
                          max_iter, eps_px)


def adapt_window(area_factor: float, max_weight: float, frame_width: int,
                 frame_height: int) -> tuple[float, float]:
    """New half extents from the zeroth moment: side = 2*sqrt(M00/max_weight).

    The division by the peak histogram weight converts total mass into an
    effective pixel count; the square-root law keeps the window tracking
    the target's apparent area. Aspect stays 1:1.
    """
    if max_weight <= 0 or area_factor <= 0:
        return MIN_HALF_EXTENT, MIN_HALF_EXTENT
    side = 2.0 * math.sqrt(area_factor / max_weight)
    half = min(max(side / 2.0, MIN_HALF_EXTENT), min(frame_width, frame_height) / 2.0)
    return half, half


def bhattacharyya(p: IntensityHistogram, q: IntensityHistogram) -> float:
    """Similarity of two normalized histograms: sum of sqrt(p*q), in [0, 1]."""
    if p.bin_count != q.bin_count:
        raise IncompatibleHistogramError(
            f"bin counts differ: {p.bin_count} vs {q.bin_count}")
    return float(min(np.sqrt(p.weights * q.weights).sum(), 1.0))


def acquire_track_state(frame: np.ndarray, centroid: PixelPoint,
                        half_width: float, half_height: float,
                        params: CamshiftParams) -> TrackState:
    """Build the frozen reference model from a freshly detected lamp ROI.

    Bins holding less than 0.1% of the peak weight are zeroed out of the
    reference: they are bounding-box spill (background pixels grazing the
    kernel ellipse), and keeping them would give empty image regions a
    small nonzero backprojection instead of a clean lost-target signal.
    """
    half_width = max(half_width, MIN_HALF_EXTENT)
    half_height = max(half_height, MIN_HALF_EXTENT)
    window = SearchWindow(centroid[0], centroid[1], half_width, half_height)
    raw = build_histogram(frame, window, params.bins).weights
    cleaned = np.where(raw >= 1e-3 * raw.max(), raw, 0.0)
    reference = IntensityHistogram(cleaned / cleaned.sum())
    rect = (int(math.floor(centroid[0] - half_width)),
            int(math.floor(centroid[1] - half_height)),
            int(math.ceil(centroid[0] + half_width)),
            int(math.ceil(centroid[1] + half_height)))
    wmap = backproject(frame, rect, reference)
    box = _Moments(wmap).box(centroid[0], centroid[1], half_width, half_height)
    area0 = box[0] if box else 0.0
    return TrackState(reference=reference, ref_half_width=half_width,
                      ref_half_height=half_height, window=window,
                      initial_area_factor=max(area0, 1e-12))


def track_step(frame: np.ndarray, state: TrackState, start_hint: PixelPoint,
               params: CamshiftParams) -> TrackResult:
    """One tracking step from a predicted start position.

    Backprojects a region around the hint (window inflated by the search
    margin), mean-shifts to the mode, rescales the window from the zeroth
    moment there, and scores the mode against the reference histogram.
    Raises LostTargetError (from mean_shift) when the region holds no
    target mass.
    """
    height, width = frame.shape
    hw, hh = state.window.half_width, state.window.half_height
    search_w = hw * params.search_margin
    search_h = hh * params.search_margin
    rect = (int(math.floor(start_hint[0] - search_w)),
            int(math.floor(start_hint[1] - search_h)),
            int(math.ceil(start_hint[0] + search_w)),
            int(math.ceil(start_hint[1] + search_h)))
    wmap = backproject(frame, rect, state.reference)
    moments = _Moments(wmap)
    mode, iterations = _shift_to_mode(moments, start_hint, hw, hh,
                                      params.max_iterations, params.eps_px)
    box = moments.box(mode[0], mode[1], hw, hh)
    area_factor = box[0] if box else 0.0

    new_hw, new_hh = adapt_window(area_factor, float(state.reference.weights.max()),
                                  width, height)
    try:
        candidate = build_histogram(
            frame, SearchWindow(mode[0], mode[1],
                                state.ref_half_width, state.ref_half_height),
            params.bins)
        similarity = bhattacharyya(state.reference, candidate)
    except OutOfFrameError:
        similarity = 0.0

    state.window = SearchWindow(mode[0], mode[1], new_hw, new_hh)
    state.last_similarity = similarity
    return TrackResult(centroid=mode, window=state.window,
                       area_factor=area_factor, iterations=iterations,
                       similarity=similarity)

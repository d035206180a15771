import numpy as np
import pytest

from conftest import LAMP1, LAMP2, TUBE, make_scene
from vlptrack.detector import (UNKNOWN, UNMODULATED, DetectorParams,
                               LampIdTable, acquire, decode_led_id,
                               detect_blobs)
from vlptrack.geometry import WorldPoint
from vlptrack.scene import Frame, LampSpec, render_frame

TABLE = LampIdTable({16.0: 1, 24.0: 2})


def blank_frame(level=10, shape=(480, 640)):
    return Frame(shape[1], shape[0],
                 np.full(shape, level, dtype=np.uint8), 0.0, 0)


class TestDetectBlobs:
    def test_dark_frame_empty(self):
        assert detect_blobs(blank_frame(), 128, 50) == []

    def test_single_lamp_centroid_matches_truth(self):
        scene = make_scene(lamps=[LAMP1], noise_sigma=0.0)
        frame, truth = render_frame(scene, 0.0)
        blobs = detect_blobs(frame, 128, 50)
        assert len(blobs) == 1
        c = truth.lamps[1].centroid
        assert np.hypot(blobs[0].centroid.u - c.u, blobs[0].centroid.v - c.v) < 0.5

    def test_three_sources_three_blobs(self, small_noisy_frame):
        scene, frame, truth = small_noisy_frame
        blobs = detect_blobs(frame, 128, 50)
        assert len(blobs) == 3

    def test_sorted_by_size_descending(self, small_noisy_frame):
        _, frame, _ = small_noisy_frame
        blobs = detect_blobs(frame, 128, 50)
        sizes = [b.pixel_count for b in blobs]
        assert sizes == sorted(sizes, reverse=True)

    def test_min_pixels_filter(self):
        frame = blank_frame()
        frame.pixels[100:103, 100:103] = 200  # 9 px speck
        assert detect_blobs(frame, 128, 50) == []
        assert len(detect_blobs(frame, 128, 5)) == 1

    def test_four_connectivity_splits_diagonal(self):
        frame = blank_frame()
        frame.pixels[10:20, 10:20] = 200
        frame.pixels[20:30, 20:30] = 200  # touches only at a corner
        assert len(detect_blobs(frame, 128, 10)) == 2

    def test_threshold_validation(self):
        for bad in (0, 255, 300):
            with pytest.raises(ValueError):
                detect_blobs(blank_frame(), bad, 50)

    def test_noisy_centroid_within_bound(self):
        scene = make_scene(lamps=[LAMP1], noise_sigma=5.0, seed=21)
        frame, truth = render_frame(scene, 0.0)
        blobs = detect_blobs(frame, 128, 50)
        c = truth.lamps[1].centroid
        assert np.hypot(blobs[0].centroid.u - c.u, blobs[0].centroid.v - c.v) < 1.5

    def test_bounding_box_covers_disc(self):
        scene = make_scene(lamps=[LAMP1], noise_sigma=0.0)
        frame, truth = render_frame(scene, 0.0)
        blob = detect_blobs(frame, 128, 50)[0]
        r = truth.lamps[1].radius_px
        assert blob.width == pytest.approx(2 * r, abs=2)
        assert blob.height == pytest.approx(2 * r, abs=2)


class TestDecodeLedId:
    def test_constant_blob_unmodulated(self):
        scene = make_scene(lamps=[TUBE], waypoints=[WorldPoint(55, 95, 40)],
                           duration_s=1.0, noise_sigma=0.0)
        frame, _ = render_frame(scene, 0.0)
        blob = detect_blobs(frame, 128, 50)[0]
        assert decode_led_id(frame, blob, TABLE) == UNMODULATED

    def test_known_periods_decode(self, small_noisy_frame):
        _, frame, truth = small_noisy_frame
        for blob in detect_blobs(frame, 128, 50):
            decoded = decode_led_id(frame, blob, TABLE)
            if decoded == UNMODULATED:
                continue
            c = truth.lamps[decoded].centroid
            assert np.hypot(blob.centroid.u - c.u, blob.centroid.v - c.v) < 1.0

    def test_unlisted_period_unknown(self):
        lamp = LampSpec(9, WorldPoint(100, 45, 190), 10.0, 20)
        scene = make_scene(lamps=[lamp], noise_sigma=0.0)
        frame, _ = render_frame(scene, 0.0)
        blob = detect_blobs(frame, 128, 50)[0]
        table = LampIdTable({16.0: 1, 24.0: 2}, tolerance_rows=2.0)
        assert decode_led_id(frame, blob, table) == UNKNOWN

    def test_tiny_blob_unknown(self):
        frame = blank_frame()
        frame.pixels[100:105, 100:140] = 200  # 5 rows only
        blob = detect_blobs(frame, 128, 50)[0]
        assert decode_led_id(frame, blob, TABLE) == UNKNOWN

    def test_scale_invariance(self):
        scene = make_scene(lamps=[LAMP1], noise_sigma=0.0)
        frame, _ = render_frame(scene, 0.0)
        blob = detect_blobs(frame, 128, 50)[0]
        for factor in (0.5, 0.7, 1.3, 1.5):
            scaled = Frame(frame.width, frame.height,
                           np.clip(frame.pixels.astype(float) * factor,
                                   0, 255).astype(np.uint8),
                           frame.timestamp, frame.frame_index)
            assert decode_led_id(scaled, blob, TABLE) == 1


class TestLampIdTable:
    def test_too_close_periods_rejected(self):
        with pytest.raises(ValueError):
            LampIdTable({12.0: 1, 16.0: 2}, tolerance_rows=2.0)

    def test_default_tolerance_accepts_four_apart(self):
        table = LampIdTable({12.0: 1, 16.0: 2, 24.0: 3, 32.0: 4})
        assert table.lookup(12.9) == 1
        assert table.lookup(14.1) is None

    def test_lookup_tolerance(self):
        assert TABLE.lookup(16.0) == 1
        assert TABLE.lookup(17.4) == 1
        assert TABLE.lookup(20.0) is None


class TestAcquire:
    def test_full_scene_returns_wanted(self, small_noisy_frame):
        _, frame, truth = small_noisy_frame
        found = acquire(frame, TABLE, {1, 2})
        assert set(found) == {1, 2}
        for lamp_id, blob in found.items():
            c = truth.lamps[lamp_id].centroid
            assert np.hypot(blob.centroid.u - c.u, blob.centroid.v - c.v) < 1.0

    def test_dark_frame_incomplete(self):
        assert acquire(blank_frame(), TABLE, {1, 2}) == {}

    def test_wrong_lamp_present_incomplete(self):
        scene = make_scene(lamps=[LAMP2], noise_sigma=0.0)
        frame, _ = render_frame(scene, 0.0)
        assert acquire(frame, TABLE, {1}) == {}

    def test_interference_never_returned(self, small_noisy_frame):
        _, frame, _ = small_noisy_frame
        found = acquire(frame, TABLE, {0, 1, 2})
        assert 0 not in found

    def test_custom_params(self, small_noisy_frame):
        _, frame, _ = small_noisy_frame
        found = acquire(frame, TABLE, {1, 2},
                        DetectorParams(threshold=100, min_blob_pixels=30))
        assert set(found) == {1, 2}

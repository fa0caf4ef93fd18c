"""Inference engine: windows, crops, coordinate transforms, sequence runs."""

import numpy as np
import pytest

from spiketrack.head import BBox
from spiketrack.model import ModelConfig, TrackerModel
from spiketrack.tracking import (
    TrackingConfig,
    TrackingError,
    crop_region,
    hann_window,
    hann_window_2d,
    penalized_decode,
    track_sequence,
)


class TestHannWindow:
    def test_endpoints_zero(self):
        for n in (2, 5, 16, 33):
            w = hann_window(n)
            assert w[0] == 0.0
            assert w[-1] == pytest.approx(0.0, abs=1e-15)

    def test_odd_length_center_one(self):
        w = hann_window(33)
        assert w[16] == pytest.approx(1.0, abs=1e-15)

    def test_n16_matches_cosine_formula(self):
        """w[k] = 0.5 (1 - cos(2 pi k / 15)) for every k, to 1e-12."""
        w = hann_window(16)
        k = np.arange(16)
        expected = 0.5 * (1.0 - np.cos(2.0 * np.pi * k / 15.0))
        np.testing.assert_allclose(w, expected, atol=1e-12)
        assert w[7] == pytest.approx(w[8], abs=1e-12)
        assert w[7] == pytest.approx(0.9890738004, abs=1e-9)

    def test_too_short_rejected(self):
        with pytest.raises(TrackingError):
            hann_window(1)

    def test_2d_outer_product_in_unit_range(self):
        w2 = hann_window_2d(16)
        assert w2.shape == (16, 16)
        assert w2.min() >= 0.0
        assert w2.max() <= 1.0
        np.testing.assert_allclose(w2, np.outer(hann_window(16), hann_window(16)), atol=1e-15)


class TestPenalizedDecode:
    def _maps(self, p):
        size = np.full((2,) + p.shape, 0.25)
        offset = np.full((2,) + p.shape, 0.5)
        return p, size, offset

    def test_uniform_map_selects_window_center(self):
        p, size, offset = self._maps(np.ones((16, 16)))
        window = hann_window_2d(16)
        box, _ = penalized_decode(p, size, offset, window, 16, 256)
        # argmax of the window itself: first of the two central rows/cols
        peak = np.unravel_index(np.argmax(window), window.shape)
        assert (box.cy, box.cx) == ((peak[0] + 0.5) * 16, (peak[1] + 0.5) * 16)

    def test_all_ones_window_is_identity(self, rng):
        """With a flat window the penalty changes nothing, argmax included."""
        from spiketrack.head import decode_box

        for _ in range(100):
            p = rng.uniform(0, 1, (16, 16))
            _, size, offset = self._maps(p)
            plain, _ = decode_box(p, size, offset, 16, 256, 256)
            windowed, _ = penalized_decode(p, size, offset, np.ones((16, 16)), 16, 256)
            assert (plain.cx, plain.cy, plain.w, plain.h) == (
                windowed.cx,
                windowed.cy,
                windowed.w,
                windowed.h,
            )

    def test_corner_peak_moves_inward(self):
        """A corner peak nulled by the window loses to an interior cell."""
        p = np.full((16, 16), 0.2)
        p[0, 0] = 1.0  # window is exactly zero here
        p[7, 7] = 0.6
        _, size, offset = self._maps(p)
        box, _ = penalized_decode(p, size, offset, hann_window_2d(16), 16, 256)
        assert (box.cx, box.cy) == ((7 + 0.5) * 16, (7 + 0.5) * 16)

    def test_window_never_raises_scores(self, rng):
        p = rng.uniform(0, 1, (16, 16))
        window = hann_window_2d(16)
        assert np.all(p * window <= p)

    def test_grid_mismatch_rejected(self):
        p, size, offset = self._maps(np.ones((16, 16)))
        with pytest.raises(TrackingError, match="grid"):
            penalized_decode(p, size, offset, np.ones((8, 8)), 16, 256)


class TestCropRegion:
    def test_native_resolution_crop_is_identity(self, rng):
        """Crop side equal to the output size copies pixels exactly."""
        frame = rng.random((400, 400, 3))
        box = BBox(200, 200, 64, 64)  # 4.0 * sqrt(64*64) = 256
        crop, transform = crop_region(frame, box, 4.0, 256)
        np.testing.assert_allclose(crop, frame[72:328, 72:328], atol=1e-12)
        assert transform.scale == pytest.approx(1.0)

    def test_transform_round_trip(self, rng):
        frame = rng.random((300, 500, 3))
        box = BBox(250, 150, 37, 53)
        _, transform = crop_region(frame, box, 4.0, 256)
        for _ in range(50):
            x, y = rng.uniform(0, 500), rng.uniform(0, 300)
            u, v = transform.point_to_crop(x, y)
            x2, y2 = transform.point_to_frame(u, v)
            assert abs(x2 - x) < 1e-6
            assert abs(y2 - y) < 1e-6
        b2 = transform.crop_to_frame(transform.frame_to_crop(box))
        assert abs(b2.cx - box.cx) < 1e-6
        assert abs(b2.w - box.w) < 1e-6

    def test_corner_box_pads_with_channel_means(self, rng):
        frame = rng.random((200, 200, 3))
        means = frame.reshape(-1, 3).mean(axis=0)
        box = BBox(2, 2, 40, 40)
        crop, _ = crop_region(frame, box, 4.0, 128)
        # crop spans [-78, 82): everything left of x=0 or above y=0 is fill
        np.testing.assert_allclose(crop[0, 0], means, atol=1e-12)
        np.testing.assert_allclose(crop[:30, :30], np.broadcast_to(means, (30, 30, 3)), atol=1e-12)

    def test_degenerate_frame_rejected(self):
        with pytest.raises(TrackingError, match="frame"):
            crop_region(np.zeros((1, 5, 3)), BBox(1, 1, 2, 2), 4.0, 64)


class TestTrackSequence:
    @pytest.fixture(scope="class")
    def model(self):
        from spiketrack.autodiff import set_debug

        set_debug(False)
        return TrackerModel(
            ModelConfig(embed_dim=16, num_blocks=1, head_width=8), seed=3
        )

    def _static_frames(self, n, rng):
        frame = np.full((160, 160, 3), 0.2)
        frame[60:100, 70:110] = (0.9, 0.5, 0.1)
        frame = np.clip(frame + rng.normal(0, 0.01, frame.shape), 0, 1)
        return [frame.copy() for _ in range(n)]

    def test_single_frame_returns_init_box(self, rng, model):
        frames = self._static_frames(1, rng)
        box = BBox(90, 80, 40, 40)
        out = track_sequence(frames, box, model)
        assert len(out) == 1
        assert out[0] is box

    def test_one_box_per_frame(self, rng, model):
        frames = self._static_frames(4, rng)
        out = track_sequence(frames, BBox(90, 80, 40, 40), model)
        assert len(out) == 4
        for b in out:
            assert b.w > 0 and b.h > 0

    def test_identical_frames_identical_predictions(self, rng, model):
        """After frame 1 the state is static, so predictions repeat exactly."""
        frames = self._static_frames(5, rng)
        out = track_sequence(frames, BBox(90, 80, 40, 40), model)
        first = out[1]
        for b in out[2:]:
            assert (b.cx, b.cy, b.w, b.h) == (first.cx, first.cy, first.w, first.h)

    def test_empty_sequence_rejected(self, model):
        with pytest.raises(TrackingError, match="empty"):
            track_sequence([], BBox(1, 1, 2, 2), model)

    def test_window_penalty_flag_respected(self, rng, model):
        frames = self._static_frames(3, rng)
        cfg_on = TrackingConfig(window_penalty=True)
        cfg_off = TrackingConfig(window_penalty=False)
        out_on = track_sequence(frames, BBox(90, 80, 40, 40), model, cfg_on)
        out_off = track_sequence(frames, BBox(90, 80, 40, 40), model, cfg_off)
        assert len(out_on) == len(out_off) == 3

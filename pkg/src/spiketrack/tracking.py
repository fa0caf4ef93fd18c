"""Per-frame inference: search cropping, Hanning penalty, box prediction.

One TrackerState per sequence. The score map is multiplied elementwise by a
Hanning window before the argmax (pure multiplication, no blend weight), and
predictions map back to frame coordinates through the crop's affine.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff.tensor import AutodiffError
from .autodiff import no_grad
from .head import BBox, decode_box
from .nn.patch import HORIZONTAL, fuse_with_layout


class TrackingError(ValueError):
    pass


def hann_window(n: int) -> np.ndarray:
    """w[k] = 0.5 (1 - cos(2 pi k / (n - 1))), k = 0..n-1."""
    if n < 2:
        raise TrackingError(f"hann_window: need n >= 2, got {n}")
    k = np.arange(n, dtype=np.float64)
    return 0.5 * (1.0 - np.cos(2.0 * np.pi * k / (n - 1)))


def hann_window_2d(n: int) -> np.ndarray:
    w = hann_window(n)
    return np.outer(w, w)


@dataclass
class CropTransform:
    """Affine frame <-> crop mapping: u = (x - left) * scale, v = (y - top) * scale."""

    left: float
    top: float
    scale: float

    def frame_to_crop(self, box: BBox) -> BBox:
        return BBox(
            (box.cx - self.left) * self.scale,
            (box.cy - self.top) * self.scale,
            box.w * self.scale,
            box.h * self.scale,
        )

    def crop_to_frame(self, box: BBox) -> BBox:
        return BBox(
            box.cx / self.scale + self.left,
            box.cy / self.scale + self.top,
            box.w / self.scale,
            box.h / self.scale,
        )

    def point_to_crop(self, x: float, y: float) -> tuple[float, float]:
        return (x - self.left) * self.scale, (y - self.top) * self.scale

    def point_to_frame(self, u: float, v: float) -> tuple[float, float]:
        return u / self.scale + self.left, v / self.scale + self.top


def _bilinear_crop(frame: np.ndarray, left: float, top: float, side: float, out: int) -> np.ndarray:
    """Sample an out x out crop of the frame; outside pixels take channel means."""
    h, w = frame.shape[:2]
    fill = frame.reshape(-1, 3).mean(axis=0)
    # output pixel centers in frame coordinates
    us = left + (np.arange(out) + 0.5) * (side / out)
    vs = top + (np.arange(out) + 0.5) * (side / out)
    valid_u = (us >= 0.0) & (us <= w)
    valid_v = (vs >= 0.0) & (vs <= h)
    xi = us - 0.5
    yi = vs - 0.5
    x0 = np.floor(xi).astype(np.int64)
    y0 = np.floor(yi).astype(np.int64)
    fx = (xi - x0)[None, :, None]
    fy = (yi - y0)[:, None, None]
    x0c = np.clip(x0, 0, w - 1)
    x1c = np.clip(x0 + 1, 0, w - 1)
    y0c = np.clip(y0, 0, h - 1)
    y1c = np.clip(y0 + 1, 0, h - 1)
    tl = frame[y0c[:, None], x0c[None, :]]
    tr = frame[y0c[:, None], x1c[None, :]]
    bl = frame[y1c[:, None], x0c[None, :]]
    br = frame[y1c[:, None], x1c[None, :]]
    top_row = tl * (1 - fx) + tr * fx
    bot_row = bl * (1 - fx) + br * fx
    crop = top_row * (1 - fy) + bot_row * fy
    mask = (valid_v[:, None] & valid_u[None, :])[:, :, None]
    return np.where(mask, crop, fill)


def crop_region(
    frame: np.ndarray, box: BBox, scale: float, out_size: int
) -> tuple[np.ndarray, CropTransform]:
    """Square crop centered on the box with side scale * sqrt(w h), resized.

    Returns the crop (out_size, out_size, 3) and the invertible affine
    transform between frame and crop coordinates.
    """
    frame = np.asarray(frame, dtype=np.float64)
    if frame.ndim != 3 or frame.shape[2] != 3 or min(frame.shape[:2]) < 2:
        raise TrackingError(f"crop_region: degenerate frame of shape {frame.shape}")
    side = scale * float(np.sqrt(box.w * box.h))
    if side <= 0:
        raise TrackingError("crop_region: non-positive crop side")
    left = box.cx - side / 2.0
    top = box.cy - side / 2.0
    crop = _bilinear_crop(frame, left, top, side, out_size)
    return np.clip(crop, 0.0, 1.0), CropTransform(left=left, top=top, scale=out_size / side)


@dataclass
class TrackingConfig:
    search_scale: float = 4.0
    template_scale: float = 2.0
    template_update_interval: int = 25
    template_update_score: float = 0.7
    window_penalty: bool = True


@dataclass
class TrackerState:
    template_initial: np.ndarray
    template_dynamic: np.ndarray
    prev_box: BBox
    hann: np.ndarray
    frame_index: int = 0
    last_peak: float = 0.0


@dataclass
class SingleObjectTracker:
    """Runs one model over one sequence; init once, then one box per frame."""

    model: object  # TrackerModel
    cfg: TrackingConfig = field(default_factory=TrackingConfig)
    state: TrackerState | None = None

    def init(self, frame: np.ndarray, box: BBox) -> None:
        template, _ = crop_region(
            frame, box, self.cfg.template_scale, self.model.cfg.template_size
        )
        side = self.model.cfg.search_size // self.model.cfg.stride
        self.state = TrackerState(
            template_initial=template,
            template_dynamic=template.copy(),
            prev_box=box,
            hann=hann_window_2d(side),
        )
        self.model.eval()

    def update(self, frame: np.ndarray) -> tuple[BBox, float]:
        """Predict the box on the next frame and advance the state."""
        if self.state is None:
            raise TrackingError("tracker used before init()")
        st = self.state
        search, transform = crop_region(
            frame, st.prev_box, self.cfg.search_scale, self.model.cfg.search_size
        )
        joint = fuse_with_layout(st.template_initial, st.template_dynamic, search, HORIZONTAL)
        with no_grad():
            maps, _, _, _ = self.model.forward_maps(joint.fused[None], HORIZONTAL)
        p, size, offset = maps.sample(0)
        box_crop, peak = penalized_decode(
            p,
            size,
            offset,
            st.hann if self.cfg.window_penalty else np.ones_like(st.hann),
            self.model.cfg.stride,
            self.model.cfg.search_size,
        )
        box = transform.crop_to_frame(box_crop)
        box = _sanitize_box(box, frame.shape[1], frame.shape[0])

        st.frame_index += 1
        st.prev_box = box
        st.last_peak = peak
        if (
            self.cfg.template_update_interval > 0
            and st.frame_index % self.cfg.template_update_interval == 0
            and peak > self.cfg.template_update_score
        ):
            st.template_dynamic, _ = crop_region(
                frame, box, self.cfg.template_scale, self.model.cfg.template_size
            )
        return box, peak


def penalized_decode(
    p: np.ndarray,
    size: np.ndarray,
    offset: np.ndarray,
    window: np.ndarray,
    stride: int,
    search_size: int,
) -> tuple[BBox, float]:
    """decode_box applied to P * window; the window must match P's grid."""
    if window.shape != p.shape:
        raise TrackingError(
            f"penalized_decode: window grid {window.shape} != score grid {p.shape}"
        )
    return decode_box(p * window, size, offset, stride, search_size, search_size)


def _sanitize_box(box: BBox, frame_w: int, frame_h: int) -> BBox:
    """Keep the box center inside the frame and extents positive."""
    w = min(max(box.w, 2.0), float(frame_w))
    h = min(max(box.h, 2.0), float(frame_h))
    cx = min(max(box.cx, 0.0), float(frame_w))
    cy = min(max(box.cy, 0.0), float(frame_h))
    return BBox(cx, cy, w, h)


def track_sequence(frames, init_box: BBox, model, cfg: TrackingConfig | None = None) -> list[BBox]:
    """One-pass evaluation: init on the first frame, one box per frame.

    Frame 0 reports the init box itself, the convention of one-pass protocols.
    """
    frames = list(frames)
    if not frames:
        raise TrackingError("track_sequence: empty sequence")
    tracker = SingleObjectTracker(model=model, cfg=cfg or TrackingConfig())
    tracker.init(frames[0], init_box)
    boxes = [init_box]
    for frame in frames[1:]:
        box, _ = tracker.update(frame)
        boxes.append(box)
    return boxes

"""Synthetic tracking scenes: one colored target, optional look-alike clutter.

Targets follow smooth random walks with bounded per-frame displacement and
slow size drift; distractors share the target color by default (the regime
where background clutter swamps target features) but never overlap the
target center. Everything is deterministic in the scene seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..head import BBox


class SceneError(ValueError):
    pass


@dataclass
class SceneSpec:
    seed: int = 0
    frame_size: int = 160
    length: int = 32
    target_shape: str = "rect"  # "rect" | "ellipse"
    target_size: float = 28.0  # base square-root area, px
    aspect: float = 1.3  # max w/h aspect ratio drawn at spawn
    max_step: float = 4.0  # max per-frame center displacement
    size_drift: float = 0.01  # relative per-frame extent change bound
    num_distractors: int = 0
    distractor_shape: str = "ellipse"
    background_noise: float = 0.03

    def __post_init__(self):
        if self.target_size * np.sqrt(self.aspect) >= self.frame_size:
            raise SceneError(
                f"target of size {self.target_size} cannot fit a "
                f"{self.frame_size} px frame"
            )
        if self.target_shape not in ("rect", "ellipse"):
            raise SceneError(f"unknown target shape {self.target_shape!r}")


def _draw_shape(frame: np.ndarray, box: BBox, color: np.ndarray, shape: str) -> None:
    h, w = frame.shape[:2]
    x1, y1, x2, y2 = box.corners
    x1i, y1i = max(int(np.floor(x1)), 0), max(int(np.floor(y1)), 0)
    x2i, y2i = min(int(np.ceil(x2)), w), min(int(np.ceil(y2)), h)
    if x2i <= x1i or y2i <= y1i:
        return
    if shape == "rect":
        frame[y1i:y2i, x1i:x2i] = color
    else:
        ys, xs = np.mgrid[y1i:y2i, x1i:x2i]
        rx, ry = box.w / 2.0, box.h / 2.0
        mask = ((xs + 0.5 - box.cx) / rx) ** 2 + ((ys + 0.5 - box.cy) / ry) ** 2 <= 1.0
        frame[y1i:y2i, x1i:x2i][mask] = color


class _Walker:
    """Bounded random walk of a box center with size drift, reflecting at walls."""

    def __init__(self, rng: np.random.Generator, spec: SceneSpec, w: float, h: float):
        self.spec = spec
        margin_x, margin_y = w / 2.0 + 1.0, h / 2.0 + 1.0
        f = spec.frame_size
        self.cx = rng.uniform(margin_x, f - margin_x)
        self.cy = rng.uniform(margin_y, f - margin_y)
        self.w, self.h = w, h
        self.vx = rng.uniform(-spec.max_step, spec.max_step)
        self.vy = rng.uniform(-spec.max_step, spec.max_step)

    def step(self, rng: np.random.Generator) -> None:
        s = self.spec
        self.vx = np.clip(self.vx + rng.uniform(-1.0, 1.0), -s.max_step, s.max_step)
        self.vy = np.clip(self.vy + rng.uniform(-1.0, 1.0), -s.max_step, s.max_step)
        self.w *= 1.0 + rng.uniform(-s.size_drift, s.size_drift)
        self.h *= 1.0 + rng.uniform(-s.size_drift, s.size_drift)
        self.w = float(np.clip(self.w, 8.0, s.frame_size / 2.0))
        self.h = float(np.clip(self.h, 8.0, s.frame_size / 2.0))
        self.cx += self.vx
        self.cy += self.vy
        lo_x, hi_x = self.w / 2.0 + 1.0, s.frame_size - self.w / 2.0 - 1.0
        lo_y, hi_y = self.h / 2.0 + 1.0, s.frame_size - self.h / 2.0 - 1.0
        if self.cx < lo_x or self.cx > hi_x:
            self.vx = -self.vx
            self.cx = float(np.clip(self.cx, lo_x, hi_x))
        if self.cy < lo_y or self.cy > hi_y:
            self.vy = -self.vy
            self.cy = float(np.clip(self.cy, lo_y, hi_y))

    def box(self) -> BBox:
        return BBox(self.cx, self.cy, self.w, self.h)


def generate_sequence(spec: SceneSpec, length: int | None = None) -> tuple[list[np.ndarray], list[BBox]]:
    """Frames (H, W, 3 float in [0,1]) and ground-truth boxes, seed-determined."""
    n = spec.length if length is None else length
    if n < 1:
        raise SceneError(f"sequence length must be >= 1, got {n}")
    rng = np.random.default_rng(spec.seed)

    bg_color = rng.uniform(0.1, 0.5, size=3)
    target_color = rng.uniform(0.5, 1.0, size=3)
    aspect = rng.uniform(1.0 / spec.aspect, spec.aspect)
    tw = spec.target_size * np.sqrt(aspect)
    th = spec.target_size / np.sqrt(aspect)
    target = _Walker(rng, spec, tw, th)

    distractors = []
    for _ in range(spec.num_distractors):
        d_aspect = rng.uniform(1.0 / spec.aspect, spec.aspect)
        dw = spec.target_size * np.sqrt(d_aspect) * rng.uniform(0.8, 1.2)
        dh = spec.target_size / np.sqrt(d_aspect) * rng.uniform(0.8, 1.2)
        distractors.append(_Walker(rng, spec, dw, dh))

    frames: list[np.ndarray] = []
    boxes: list[BBox] = []
    for i in range(n):
        if i > 0:
            target.step(rng)
            for d in distractors:
                d.step(rng)
        gt = target.box()
        frame = np.tile(bg_color, (spec.frame_size, spec.frame_size, 1))
        if spec.background_noise > 0:
            frame = frame + rng.normal(0.0, spec.background_noise, frame.shape)
        for d in distractors:
            _separate(d, gt, spec.frame_size)
            _draw_shape(frame, d.box(), target_color, spec.distractor_shape)
        _draw_shape(frame, gt, target_color, spec.target_shape)
        frames.append(np.clip(frame, 0.0, 1.0))
        boxes.append(gt)
    return frames, boxes


def _separate(d: _Walker, gt: BBox, frame_size: int) -> None:
    """Push a distractor off the target so their centers never coincide."""
    min_sep = 0.8 * (max(gt.w, gt.h) + max(d.w, d.h)) / 2.0 + 2.0
    dx, dy = d.cx - gt.cx, d.cy - gt.cy
    dist = float(np.hypot(dx, dy))
    if dist >= min_sep:
        return
    if dist < 1e-9:
        dx, dy, dist = 1.0, 1.0, float(np.sqrt(2.0))
    scale = min_sep / dist
    d.cx = float(np.clip(gt.cx + dx * scale, d.w / 2.0 + 1.0, frame_size - d.w / 2.0 - 1.0))
    d.cy = float(np.clip(gt.cy + dy * scale, d.h / 2.0 + 1.0, frame_size - d.h / 2.0 - 1.0))

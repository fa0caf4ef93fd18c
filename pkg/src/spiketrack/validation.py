"""Input validation helpers for the public estimator and tracking APIs."""

from __future__ import annotations

import numpy as np

from .head import BBox


class ValidationError(ValueError):
    pass


def check_frame(frame, name: str = "frame") -> np.ndarray:
    arr = np.asarray(frame, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValidationError(f"{name}: expected (H, W, 3) array, got shape {arr.shape}")
    if arr.size and (arr.min() < 0.0 or arr.max() > 1.0):
        if arr.max() > 1.0 and arr.max() <= 255.0:
            arr = arr / 255.0
        else:
            raise ValidationError(f"{name}: pixel values outside [0, 1]")
    return arr


def check_frames(frames, name: str = "frames") -> list[np.ndarray]:
    frames = list(frames)
    if not frames:
        raise ValidationError(f"{name}: empty sequence")
    return [check_frame(f, f"{name}[{i}]") for i, f in enumerate(frames)]


def check_box(box, name: str = "box") -> BBox:
    """Accept a BBox or a 4-sequence in corner format (x, y, w, h)."""
    if isinstance(box, BBox):
        return box
    arr = np.asarray(box, dtype=np.float64).reshape(-1)
    if arr.size != 4:
        raise ValidationError(f"{name}: expected (x, y, w, h), got {arr.size} values")
    if arr[2] <= 0 or arr[3] <= 0:
        raise ValidationError(f"{name}: non-positive extents {arr[2]} x {arr[3]}")
    return BBox.from_corner_size(*arr)


def check_boxes(boxes, n_frames: int | None = None, name: str = "boxes") -> list[BBox]:
    out = [check_box(b, f"{name}[{i}]") for i, b in enumerate(boxes)]
    if not out:
        raise ValidationError(f"{name}: empty box list")
    if n_frames is not None and len(out) != n_frames:
        raise ValidationError(f"{name}: {len(out)} boxes for {n_frames} frames")
    return out


def check_sequences(X, name: str = "X") -> list[tuple[list[np.ndarray], list[BBox]]]:
    """Training input: iterable of (frames, gt_boxes) pairs."""
    try:
        items = list(X)
    except TypeError:
        raise ValidationError(f"{name}: expected an iterable of (frames, boxes) pairs")
    if not items:
        raise ValidationError(f"{name}: no sequences")
    out = []
    for i, item in enumerate(items):
        if not isinstance(item, (tuple, list)) or len(item) != 2:
            raise ValidationError(f"{name}[{i}]: expected a (frames, boxes) pair")
        frames = check_frames(item[0], f"{name}[{i}].frames")
        boxes = check_boxes(item[1], len(frames), f"{name}[{i}].boxes")
        out.append((frames, boxes))
    return out

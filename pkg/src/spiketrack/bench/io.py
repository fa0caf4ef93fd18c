"""Sequence and result files: numbered PNG/PPM frames plus x,y,w,h text lines.

Box lines use the corner-format convention (x, y of the top-left corner), one
line per frame. repr-precision floats round-trip exactly through the parser.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

from ..head import BBox


class SequenceIOError(ValueError):
    pass


def format_box_line(box: BBox) -> str:
    x, y, w, h = box.corner_size()
    return f"{x!r},{y!r},{w!r},{h!r}"


def parse_box_line(line: str) -> BBox:
    parts = line.strip().split(",")
    if len(parts) != 4:
        raise SequenceIOError(f"expected 'x,y,w,h', got {line!r}")
    x, y, w, h = (float(p) for p in parts)
    return BBox.from_corner_size(x, y, w, h)


def write_boxes(path, boxes) -> None:
    Path(path).write_text("".join(format_box_line(b) + "\n" for b in boxes))


def read_boxes(path) -> list[BBox]:
    lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip()]
    return [parse_box_line(ln) for ln in lines]


def save_sequence(directory, frames, boxes) -> None:
    """Frames as 8-bit PNGs plus groundtruth.txt and init.txt."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for i, frame in enumerate(frames):
        img = (np.clip(np.asarray(frame), 0.0, 1.0) * 255.0).round().astype(np.uint8)
        Image.fromarray(img).save(directory / f"{i:06d}.png")
    write_boxes(directory / "groundtruth.txt", boxes)
    (directory / "init.txt").write_text(format_box_line(boxes[0]) + "\n")


def load_frames(directory) -> list[np.ndarray]:
    directory = Path(directory)
    paths = sorted(
        p for p in directory.iterdir() if p.suffix.lower() in (".png", ".ppm")
    )
    if not paths:
        raise SequenceIOError(f"no PNG/PPM frames in {directory}")
    frames = []
    for p in paths:
        arr = np.asarray(Image.open(p).convert("RGB"), dtype=np.float64) / 255.0
        frames.append(arr)
    return frames


def load_init_box(directory) -> BBox:
    directory = Path(directory)
    for name in ("init.txt", "groundtruth.txt"):
        path = directory / name
        if path.exists():
            first = path.read_text().splitlines()[0]
            return parse_box_line(first)
    raise SequenceIOError(f"no init.txt or groundtruth.txt in {directory}")

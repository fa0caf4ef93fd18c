"""Random patch fusion: templates and search region combined into one image.

Training picks horizontal or vertical concatenation uniformly at random per
call; inference always uses the horizontal layout. The fusion is a pure
rearrangement, so an exact inverse exists.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

HORIZONTAL = "horizontal"
VERTICAL = "vertical"

TEMPLATE1 = 0
TEMPLATE2 = 1
SEARCH = 2

TOKEN_TYPE_NAMES = ("template1", "template2", "search")


class PatchError(ValueError):
    pass


def _check_image(img: np.ndarray, side: int, name: str) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.shape != (side, side, 3):
        raise PatchError(f"{name}: expected shape ({side}, {side}, 3), got {img.shape}")
    if img.size and (img.min() < 0.0 or img.max() > 1.0):
        raise PatchError(f"{name}: pixel values outside [0, 1]")
    return img


@dataclass
class JointInput:
    """Fused template/search image plus the layout needed to address regions."""

    fused: np.ndarray  # (H, W, 3), values in [0, 1]
    layout: str
    template_size: int = 128
    search_size: int = 256

    def region_offsets(self) -> dict[int, tuple[int, int]]:
        """(row, col) pixel offset of each region in the fused image."""
        t = self.template_size
        if self.layout == HORIZONTAL:
            return {TEMPLATE1: (0, 0), TEMPLATE2: (t, 0), SEARCH: (0, t)}
        return {TEMPLATE1: (0, 0), TEMPLATE2: (0, t), SEARCH: (t, 0)}

    def token_types(self, stride: int) -> np.ndarray:
        """Per-patch token type grid for a backbone of the given stride."""
        if self.template_size % stride or self.search_size % stride:
            raise PatchError(
                f"stride {stride} does not divide template/search sizes"
            )
        h, w = self.fused.shape[0] // stride, self.fused.shape[1] // stride
        grid = np.full((h, w), SEARCH, dtype=np.int64)
        t = self.template_size // stride
        if self.layout == HORIZONTAL:
            grid[:t, :t] = TEMPLATE1
            grid[t : 2 * t, :t] = TEMPLATE2
        else:
            grid[:t, :t] = TEMPLATE1
            grid[:t, t : 2 * t] = TEMPLATE2
        return grid


def random_patch_fuse(
    t1: np.ndarray,
    t2: np.ndarray,
    x: np.ndarray,
    rng_seed: int,
    mode: str = "train",
) -> JointInput:
    """Fuse two templates and a search image into one rectangular input.

    Train mode draws the layout uniformly from {horizontal, vertical} using
    the seeded generator; infer mode is always horizontal. Pixels are copied
    bit-identically.
    """
    t1 = _check_image(t1, 128, "template1")
    t2 = _check_image(t2, 128, "template2")
    x = _check_image(x, 256, "search")
    if mode == "infer":
        layout = HORIZONTAL
    elif mode == "train":
        layout = HORIZONTAL if np.random.default_rng(rng_seed).integers(2) == 0 else VERTICAL
    else:
        raise PatchError(f"mode must be 'train' or 'infer', got {mode!r}")
    return fuse_with_layout(t1, t2, x, layout)


def fuse_with_layout(t1: np.ndarray, t2: np.ndarray, x: np.ndarray, layout: str) -> JointInput:
    if layout == HORIZONTAL:
        fused = np.hstack([np.vstack([t1, t2]), x])
    elif layout == VERTICAL:
        fused = np.vstack([np.hstack([t1, t2]), x])
    else:
        raise PatchError(f"unknown layout {layout!r}")
    return JointInput(fused=fused, layout=layout)


def unfuse(joint: JointInput) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Exact inverse of the fusion rearrangement."""
    t = joint.template_size
    s = joint.search_size
    offs = joint.region_offsets()
    r1, c1 = offs[TEMPLATE1]
    r2, c2 = offs[TEMPLATE2]
    rs, cs = offs[SEARCH]
    return (
        joint.fused[r1 : r1 + t, c1 : c1 + t].copy(),
        joint.fused[r2 : r2 + t, c2 : c2 + t].copy(),
        joint.fused[rs : rs + s, cs : cs + s].copy(),
    )

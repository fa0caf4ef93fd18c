"""Spiking center prediction head: score/size/offset maps, box codec, losses.

The head reshapes search tokens into a 2-D map and runs three branches of
four multi-spike conv layers each (the last conv feeds a sigmoid instead of
a neuron, so maps are continuous in [0, 1]). Boxes decode off the score-map
argmax; ties break to the first cell in row-major order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import ops
from .autodiff.tensor import AutodiffError, Tensor
from .nn.layers import Conv2d, Module, SpikeConv
from .nn.neuron import MultiSpikeNeuron


class HeadError(ValueError):
    pass


@dataclass
class BBox:
    """Axis-aligned box: center (cx, cy) and extents (w, h), in pixels."""

    cx: float
    cy: float
    w: float
    h: float

    def __post_init__(self):
        if not (self.w > 0 and self.h > 0):
            raise HeadError(f"BBox extents must be positive, got w={self.w}, h={self.h}")

    @property
    def corners(self) -> tuple[float, float, float, float]:
        return (
            self.cx - self.w / 2.0,
            self.cy - self.h / 2.0,
            self.cx + self.w / 2.0,
            self.cy + self.h / 2.0,
        )

    @property
    def area(self) -> float:
        return self.w * self.h

    def as_array(self) -> np.ndarray:
        return np.array([self.cx, self.cy, self.w, self.h], dtype=np.float64)

    @staticmethod
    def from_corner_size(x: float, y: float, w: float, h: float) -> "BBox":
        return BBox(x + w / 2.0, y + h / 2.0, w, h)

    def corner_size(self) -> tuple[float, float, float, float]:
        return (self.cx - self.w / 2.0, self.cy - self.h / 2.0, self.w, self.h)


@dataclass
class ScoreMaps:
    """Classification map P (B,h,w), size map S and offset map O (B,2,h,w)."""

    p: Tensor
    size: Tensor
    offset: Tensor

    def __post_init__(self):
        ph, pw = self.p.shape[-2:]
        if self.size.shape[-2:] != (ph, pw) or self.offset.shape[-2:] != (ph, pw):
            raise HeadError("score maps must share one spatial grid")

    def sample(self, b: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.p.data[b], self.size.data[b], self.offset.data[b]


class HeadBranch(Module):
    """Four stacked multi-spike conv layers; the last one feeds a sigmoid."""

    def __init__(
        self,
        in_channels: int,
        width: int,
        out_channels: int,
        neuron: MultiSpikeNeuron,
        rng: np.random.Generator,
    ):
        super().__init__()
        self.neuron = neuron
        self.conv1 = SpikeConv(in_channels, width, 3, neuron, rng, pad=1)
        self.conv2 = SpikeConv(width, width, 3, neuron, rng, pad=1)
        self.conv3 = SpikeConv(width, width, 3, neuron, rng, pad=1)
        self.out_conv = Conv2d(width, out_channels, 1, rng)

    def forward(self, x: Tensor, relaxed: bool = False) -> Tensor:
        h = self.conv1(x, relaxed=relaxed)
        h = self.conv2(h, relaxed=relaxed)
        h = self.conv3(h, relaxed=relaxed)
        return ops.sigmoid(self.out_conv(self.neuron(h, relaxed=relaxed)))


class CenterHead(Module):
    def __init__(
        self,
        embed_dim: int,
        width: int,
        neuron: MultiSpikeNeuron,
        rng: np.random.Generator,
    ):
        super().__init__()
        self.embed_dim = embed_dim
        self.cls_branch = HeadBranch(embed_dim, width, 1, neuron, rng)
        self.size_branch = HeadBranch(embed_dim, width, 2, neuron, rng)
        self.offset_branch = HeadBranch(embed_dim, width, 2, neuron, rng)

    def forward(self, search_features: Tensor, relaxed: bool = False) -> ScoreMaps:
        """search_features: (B, n_tokens, D) with n_tokens a perfect square."""
        b, n, d = search_features.shape
        side = int(round(np.sqrt(n)))
        if side * side != n:
            raise HeadError(f"search token count {n} is not a square grid")
        grid = ops.reshape(search_features, (b, side, side, d))
        p = ops.reshape(self.cls_branch(grid, relaxed=relaxed), (b, side, side))
        # branches run channel-last; the public maps are (B, 2, h, w)
        size = ops.permute(self.size_branch(grid, relaxed=relaxed), (0, 3, 1, 2))
        offset = ops.permute(self.offset_branch(grid, relaxed=relaxed), (0, 3, 1, 2))
        return ScoreMaps(p=p, size=size, offset=offset)


# ---------------------------------------------------------------------------
# box codec


def decode_box(
    p: np.ndarray,
    size: np.ndarray,
    offset: np.ndarray,
    stride: int,
    search_w: int,
    search_h: int,
) -> tuple[BBox, float]:
    """Box at the score-map argmax (first maximum in row-major order)."""
    flat = int(np.argmax(p))
    row, col = divmod(flat, p.shape[1])
    cx = (col + float(offset[0, row, col])) * stride
    cy = (row + float(offset[1, row, col])) * stride
    w = float(size[0, row, col]) * search_w
    h = float(size[1, row, col]) * search_h
    return BBox(cx, cy, w, h), float(p[row, col])


def encode_box(
    box: BBox, stride: int, map_h: int, map_w: int, search_w: int, search_h: int
) -> tuple[tuple[int, int], np.ndarray, np.ndarray]:
    """Inverse of decode_box: peak cell (row, col), offsets, normalized sizes."""
    col = min(int(box.cx // stride), map_w - 1)
    row = min(int(box.cy // stride), map_h - 1)
    if col < 0 or row < 0:
        raise HeadError(f"box center ({box.cx}, {box.cy}) outside the search image")
    off = np.array([box.cx / stride - col, box.cy / stride - row], dtype=np.float64)
    sz = np.array([box.w / search_w, box.h / search_h], dtype=np.float64)
    return (row, col), off, sz


def boxes_at_cells(
    maps: ScoreMaps,
    cells: np.ndarray,
    stride: int,
    search_w: int,
    search_h: int,
) -> Tensor:
    """Differentiable (B, 4) cxcywh boxes read at fixed cells (row, col)."""
    b = maps.p.shape[0]
    h, w = maps.p.shape[-2:]
    cells = np.asarray(cells, dtype=np.int64)
    if cells.shape != (b, 2):
        raise HeadError(f"cells must be (B, 2) (row, col), got {cells.shape}")
    rows, cols = cells[:, 0], cells[:, 1]
    base = np.arange(b) * (2 * h * w)
    at = rows * w + cols
    off_flat = ops.reshape(maps.offset, (b * 2 * h * w,))
    sz_flat = ops.reshape(maps.size, (b * 2 * h * w,))
    ox = ops.index_rows(off_flat, base + at)
    oy = ops.index_rows(off_flat, base + h * w + at)
    sw = ops.index_rows(sz_flat, base + at)
    sh = ops.index_rows(sz_flat, base + h * w + at)
    cx = ops.mul(ops.add(ox, Tensor(cols.astype(np.float64))), Tensor(float(stride)))
    cy = ops.mul(ops.add(oy, Tensor(rows.astype(np.float64))), Tensor(float(stride)))
    bw = ops.mul(sw, Tensor(float(search_w)))
    bh = ops.mul(sh, Tensor(float(search_h)))
    stacked = ops.concat(
        [ops.reshape(t, (b, 1)) for t in (cx, cy, bw, bh)], axis=1
    )
    return stacked


# ---------------------------------------------------------------------------
# classification target


def gaussian_radius(h_cells: float, w_cells: float, min_overlap: float = 0.3) -> float:
    """Smallest of the three CenterNet corner-displacement radii."""
    a1 = 1.0
    b1 = h_cells + w_cells
    c1 = w_cells * h_cells * (1 - min_overlap) / (1 + min_overlap)
    r1 = (b1 - np.sqrt(b1 * b1 - 4 * a1 * c1)) / (2 * a1)

    a2 = 4.0
    b2 = 2 * (h_cells + w_cells)
    c2 = (1 - min_overlap) * w_cells * h_cells
    r2 = (b2 - np.sqrt(b2 * b2 - 4 * a2 * c2)) / (2 * a2)

    a3 = 4.0 * min_overlap
    b3 = -2 * min_overlap * (h_cells + w_cells)
    c3 = (min_overlap - 1) * w_cells * h_cells
    r3 = (-b3 + np.sqrt(b3 * b3 - 4 * a3 * c3)) / (2 * a3)
    return max(0.0, min(r1, r2, r3))


def make_cls_target(map_h: int, map_w: int, cell: tuple[int, int], box_cells: tuple[float, float]) -> np.ndarray:
    """Gaussian-splatted target with an exact 1.0 peak at the given cell."""
    row, col = cell
    radius = gaussian_radius(box_cells[1], box_cells[0])
    sigma = max((2.0 * radius + 1.0) / 6.0, 1e-3)
    ys, xs = np.mgrid[0:map_h, 0:map_w]
    target = np.exp(-((xs - col) ** 2 + (ys - row) ** 2) / (2.0 * sigma * sigma))
    target[target < 1e-8] = 0.0
    target[row, col] = 1.0
    return target


# ---------------------------------------------------------------------------
# losses


_EPS = 1e-12


def focal_loss(p: Tensor, target: np.ndarray, alpha: float = 2.0, gamma: float = 4.0) -> Tensor:
    """Penalty-reduced focal loss on the classification map, averaged over peaks."""
    target = np.asarray(target, dtype=np.float64)
    if target.shape != p.shape:
        raise HeadError(f"focal_loss: target shape {target.shape} != map {p.shape}")
    if target.size and (target.min() < 0.0 or target.max() > 1.0):
        raise HeadError("focal_loss: target values outside [0, 1]")
    peak_mask = (target == 1.0).astype(np.float64)
    n_peaks = peak_mask.sum()
    if n_peaks == 0:
        raise HeadError("focal_loss: target has no peak equal to 1")

    p_safe = ops.clamp_min(p, _EPS)
    q_safe = ops.clamp_min(ops.sub(Tensor(1.0), p), _EPS)
    pos = ops.mul(
        ops.mul(Tensor(peak_mask), ops.pow_scalar(q_safe, alpha)), ops.log(p_safe)
    )
    neg_weight = (1.0 - peak_mask) * (1.0 - target) ** gamma
    neg = ops.mul(
        ops.mul(Tensor(neg_weight), ops.pow_scalar(p_safe, alpha)), ops.log(q_safe)
    )
    total = ops.add(ops.sum_(pos), ops.sum_(neg))
    return ops.mul(total, Tensor(-1.0 / n_peaks))


def _as_box_tensor(box) -> Tensor:
    if isinstance(box, BBox):
        return Tensor(box.as_array().reshape(1, 4))
    if isinstance(box, Tensor):
        t = box
    else:
        t = Tensor(np.asarray(box, dtype=np.float64))
    if t.ndim == 1:
        t = ops.reshape(t, (1, 4))
    if t.ndim != 2 or t.shape[1] != 4:
        raise HeadError(f"boxes must be (B, 4) cxcywh, got {t.shape}")
    return t


def _col(t: Tensor, i: int) -> Tensor:
    return ops.slice_axis(t, 1, i, i + 1)


def giou_loss(pred, gt) -> Tensor:
    """1 - GIoU, averaged over the batch; in [0, 2) for positive-extent boxes."""
    pt = _as_box_tensor(pred)
    gtt = _as_box_tensor(gt)
    if pt.shape != gtt.shape:
        raise HeadError(f"giou_loss: shapes {pt.shape} and {gtt.shape} differ")
    for name, t in (("pred", pt), ("gt", gtt)):
        if np.any(t.data[:, 2] <= 0) or np.any(t.data[:, 3] <= 0):
            raise HeadError(f"giou_loss: degenerate {name} box (non-positive extent)")

    half = Tensor(0.5)
    ax1 = ops.sub(_col(pt, 0), ops.mul(_col(pt, 2), half))
    ay1 = ops.sub(_col(pt, 1), ops.mul(_col(pt, 3), half))
    ax2 = ops.add(_col(pt, 0), ops.mul(_col(pt, 2), half))
    ay2 = ops.add(_col(pt, 1), ops.mul(_col(pt, 3), half))
    bx1 = ops.sub(_col(gtt, 0), ops.mul(_col(gtt, 2), half))
    by1 = ops.sub(_col(gtt, 1), ops.mul(_col(gtt, 3), half))
    bx2 = ops.add(_col(gtt, 0), ops.mul(_col(gtt, 2), half))
    by2 = ops.add(_col(gtt, 1), ops.mul(_col(gtt, 3), half))

    iw = ops.clamp_min(ops.sub(ops.minimum(ax2, bx2), ops.maximum(ax1, bx1)), 0.0)
    ih = ops.clamp_min(ops.sub(ops.minimum(ay2, by2), ops.maximum(ay1, by1)), 0.0)
    inter = ops.mul(iw, ih)
    area_a = ops.mul(_col(pt, 2), _col(pt, 3))
    area_b = ops.mul(_col(gtt, 2), _col(gtt, 3))
    union = ops.sub(ops.add(area_a, area_b), inter)
    iou = ops.div(inter, union)

    cw = ops.sub(ops.maximum(ax2, bx2), ops.minimum(ax1, bx1))
    ch = ops.sub(ops.maximum(ay2, by2), ops.minimum(ay1, by1))
    carea = ops.mul(cw, ch)
    giou = ops.sub(iou, ops.div(ops.sub(carea, union), carea))
    return ops.mean(ops.sub(Tensor(1.0), giou))


def l1_box_loss(pred, gt, search_w: int, search_h: int) -> Tensor:
    """Mean absolute error on (cx/W, cy/H, w/W, h/H) normalized coordinates."""
    pt = _as_box_tensor(pred)
    gtt = _as_box_tensor(gt)
    if pt.shape != gtt.shape:
        raise HeadError(f"l1_box_loss: shapes {pt.shape} and {gtt.shape} differ")
    scale = Tensor(
        1.0 / np.array([search_w, search_h, search_w, search_h], dtype=np.float64)
    )
    diff = ops.mul(ops.sub(pt, gtt), scale)
    return ops.mean(ops.absolute(diff))


def similarity_loss(feat_a: Tensor, feat_b: Tensor) -> Tensor:
    """1 - cosine similarity between pooled template features, batch mean."""
    if feat_a.shape != feat_b.shape:
        raise HeadError(f"similarity_loss: shapes {feat_a.shape} and {feat_b.shape} differ")
    a = feat_a if feat_a.ndim == 2 else ops.reshape(feat_a, (1, feat_a.size))
    b = feat_b if feat_b.ndim == 2 else ops.reshape(feat_b, (1, feat_b.size))
    norms_a = np.sqrt((a.data * a.data).sum(axis=1))
    norms_b = np.sqrt((b.data * b.data).sum(axis=1))
    if np.any(norms_a == 0.0) or np.any(norms_b == 0.0):
        raise HeadError("similarity_loss: zero feature vector")
    dot = ops.sum_(ops.mul(a, b), axis=1)
    na = ops.sqrt(ops.sum_(ops.mul(a, a), axis=1))
    nb = ops.sqrt(ops.sum_(ops.mul(b, b), axis=1))
    cos = ops.div(dot, ops.mul(na, nb))
    return ops.mean(ops.sub(Tensor(1.0), cos))


@dataclass
class LossWeights:
    lambda_iou: float = 2.0
    lambda_l1: float = 5.0
    lambda_sim: float = 0.1

    def __post_init__(self):
        for name in ("lambda_iou", "lambda_l1", "lambda_sim"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise HeadError(f"{name} must be finite and >= 0, got {v}")


def total_loss(
    cls: Tensor,
    giou: Tensor,
    l1: Tensor,
    sim: Tensor,
    mi: Tensor,
    weights: LossWeights,
) -> Tensor:
    """cls + iou*giou + l1*l1 + sim*sim + mi.

    The MI term arrives with its adaptive weight already applied (the MI loss
    definition carries lambda_mi), so its coefficient here is exactly 1.
    """
    out = ops.add(cls, ops.mul(giou, Tensor(weights.lambda_iou)))
    out = ops.add(out, ops.mul(l1, Tensor(weights.lambda_l1)))
    out = ops.add(out, ops.mul(sim, Tensor(weights.lambda_sim)))
    return ops.add(out, mi)

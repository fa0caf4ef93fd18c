"""Training loop: paired-crop sampling, composite loss, decoupled-decay Adam.

Each step fuses template/search crops through the random patch module, runs
the spiking backbone and head, forms the focal/GIoU/L1/similarity losses,
weights the MI term through the difficulty scheduler (the delta always reads
the pre-update EMA), and applies one optimizer step. Everything is seeded;
two runs with one (config, seed) produce identical logs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .adaptive_weight import AdaptiveWeightConfig, AdaptiveWeighter
from .autodiff import Tape, backward
from .autodiff.tensor import Tensor
from .head import (
    BBox,
    LossWeights,
    boxes_at_cells,
    encode_box,
    focal_loss,
    giou_loss,
    l1_box_loss,
    make_cls_target,
    similarity_loss,
    total_loss,
)
from .mi.estimator import jsd_mi_estimate, mi_loss, pool_template_features, shuffle_batch
from .model import TrackerModel
from .nn.patch import random_patch_fuse
from .tracking import crop_region

LOG_COLUMNS = (
    "step",
    "loss_total",
    "loss_cls",
    "loss_giou",
    "loss_l1",
    "loss_sim",
    "loss_mi",
    "mi_estimate",
    "ema_giou",
    "delta",
    "lambda_mi",
)


class AdamW:
    """Adaptive moments with decoupled weight decay."""

    def __init__(
        self,
        params: dict[str, Tensor],
        lr: float,
        betas: tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
        weight_decay: float = 1e-4,
    ):
        self.params = dict(params)
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.step_count = 0
        self._m = {k: np.zeros_like(p.data) for k, p in self.params.items()}
        self._v = {k: np.zeros_like(p.data) for k, p in self.params.items()}

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def step(self) -> None:
        self.step_count += 1
        t = self.step_count
        bias1 = 1.0 - self.beta1**t
        bias2 = 1.0 - self.beta2**t
        for key, p in self.params.items():
            g = p.grad
            if g is None:
                continue
            m = self._m[key]
            v = self._v[key]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            update = (m / bias1) / (np.sqrt(v / bias2) + self.eps)
            p.data = p.data - self.lr * (update + self.weight_decay * p.data)


@dataclass
class DataConfig:
    """Synthetic-scene parameters for the training pool and held-out eval."""

    num_scenes: int = 8
    frames_per_scene: int = 32
    frame_size: int = 160
    target_size: float = 28.0
    max_step: float = 4.0
    num_distractors: int = 0
    background_noise: float = 0.03
    target_shape: str = "rect"
    distractor_shape: str = "ellipse"
    pool_pairs: int = 256
    jitter_center_frac: float = 0.10  # of the search crop side
    jitter_scale: float = 0.15

    def scene_spec(self, seed: int):
        from .bench.synthetic import SceneSpec  # circular at module load

        return SceneSpec(
            seed=seed,
            frame_size=self.frame_size,
            length=self.frames_per_scene,
            target_shape=self.target_shape,
            target_size=self.target_size,
            max_step=self.max_step,
            num_distractors=self.num_distractors,
            distractor_shape=self.distractor_shape,
            background_noise=self.background_noise,
        )


@dataclass
class TrainConfig:
    batch_size: int = 32
    steps: int = 2000
    lr: float = 4e-5
    weight_decay: float = 1e-4
    grad_clip: float = 0.0  # 0 disables
    seed: int = 0
    mi_enabled: bool = True
    loss_weights: LossWeights = field(default_factory=LossWeights)
    amim: AdaptiveWeightConfig = field(default_factory=AdaptiveWeightConfig)


@dataclass
class TrainingPair:
    template1: np.ndarray  # (T, T, 3) uint8
    template2: np.ndarray
    search: np.ndarray  # (S, S, 3) uint8
    gt_crop: BBox  # ground truth in search-crop coordinates
    z_pixels: np.ndarray  # channel-first flat template pixels for the MI input


class PairSampler:
    """Pre-generated pool of (template, template, search, box) training crops.

    Works from any list of (frames, gt_boxes) sequences; crops are stored as
    8-bit images so a few hundred pairs stay small in memory.
    """

    def __init__(
        self,
        sequences: list[tuple[list[np.ndarray], list[BBox]]],
        model_cfg,
        search_scale: float,
        template_scale: float,
        pool_pairs: int,
        jitter_center_frac: float,
        jitter_scale: float,
        seed: int,
    ):
        if not sequences:
            raise ValueError("PairSampler: no training sequences")
        rng = np.random.default_rng(seed)
        t_size = model_cfg.template_size
        s_size = model_cfg.search_size
        self.pairs: list[TrainingPair] = []
        for _ in range(pool_pairs):
            frames, boxes = sequences[int(rng.integers(len(sequences)))]
            ia, ib, ic = rng.integers(len(frames), size=3)
            t1, _ = crop_region(frames[ia], boxes[ia], template_scale, t_size)
            t2, _ = crop_region(frames[ib], boxes[ib], template_scale, t_size)
            gt = boxes[ic]
            side = search_scale * float(np.sqrt(gt.w * gt.h))
            jitter = jitter_center_frac * side
            center_box = BBox(
                gt.cx + rng.uniform(-jitter, jitter),
                gt.cy + rng.uniform(-jitter, jitter),
                gt.w * float(np.exp(rng.uniform(-jitter_scale, jitter_scale))),
                gt.h * float(np.exp(rng.uniform(-jitter_scale, jitter_scale))),
            )
            search, transform = crop_region(frames[ic], center_box, search_scale, s_size)
            gt_crop = transform.frame_to_crop(gt)
            t1u, t2u = _to_u8(t1), _to_u8(t2)
            if model_cfg.pool_templates == "both":
                z = np.concatenate([t1u, t2u], axis=2)  # (T, T, 6) channel-last
            else:
                z = t1u
            self.pairs.append(
                TrainingPair(
                    template1=t1u,
                    template2=t2u,
                    search=_to_u8(search),
                    gt_crop=gt_crop,
                    z_pixels=z.reshape(-1),
                )
            )

    def batch(self, rng: np.random.Generator, size: int) -> list[TrainingPair]:
        idx = rng.integers(len(self.pairs), size=size)
        return [self.pairs[i] for i in idx]


def _to_u8(img: np.ndarray) -> np.ndarray:
    return (np.clip(img, 0.0, 1.0) * 255.0).round().astype(np.uint8)


def _to_f64(img: np.ndarray) -> np.ndarray:
    return img.astype(np.float64) / 255.0


@dataclass
class TrainResult:
    model: TrackerModel
    log_rows: list[dict]

    @property
    def smoothed_giou_start(self) -> float:
        return self.log_rows[0]["ema_giou"]

    @property
    def smoothed_giou_final(self) -> float:
        return self.log_rows[-1]["ema_giou"]


def train_tracker(
    model: TrackerModel,
    sampler: PairSampler,
    cfg: TrainConfig,
    progress=None,
) -> TrainResult:
    """Run cfg.steps optimizer steps; returns the model and per-step log rows."""
    model.train()
    params = model.backbone.named_parameters("backbone.")
    params.update(model.head.named_parameters("head."))
    if cfg.mi_enabled:
        params.update(model.statnet.named_parameters("statnet."))
    optimizer = AdamW(params, lr=cfg.lr, weight_decay=cfg.weight_decay)
    weighter = AdaptiveWeighter(cfg.amim)
    rng = np.random.default_rng(cfg.seed)
    stride = model.cfg.stride
    s_size = model.cfg.search_size
    map_side = s_size // stride
    log_rows: list[dict] = []

    for step in range(cfg.steps):
        pairs = sampler.batch(rng, cfg.batch_size)
        fuse_seed = int(rng.integers(2**31))
        mi_seed = int(rng.integers(2**31))

        joints = [
            random_patch_fuse(
                _to_f64(p.template1), _to_f64(p.template2), _to_f64(p.search), fuse_seed, "train"
            )
            for p in pairs
        ]
        layout = joints[0].layout
        images = np.stack([j.fused for j in joints])

        cells = np.zeros((len(pairs), 2), dtype=np.int64)
        cls_target = np.zeros((len(pairs), map_side, map_side))
        gt_boxes = np.zeros((len(pairs), 4))
        for i, p in enumerate(pairs):
            (row, col), _, _ = encode_box(p.gt_crop, stride, map_side, map_side, s_size, s_size)
            cells[i] = (row, col)
            cls_target[i] = make_cls_target(
                map_side, map_side, (row, col), (p.gt_crop.w / stride, p.gt_crop.h / stride)
            )
            gt_boxes[i] = p.gt_crop.as_array()

        with Tape():
            maps, features, tl, _ = model.forward_maps(images, layout)
            cls = focal_loss(maps.p, cls_target)
            pred_boxes = boxes_at_cells(maps, cells, stride, s_size, s_size)
            giou = giou_loss(pred_boxes, gt_boxes)
            l1 = l1_box_loss(pred_boxes, gt_boxes, s_size, s_size)
            feats_t1 = pool_template_features(features, tl, "template1")
            feats_t2 = pool_template_features(features, tl, "template2")
            sim = similarity_loss(feats_t1, feats_t2)

            lam, delta, ema_before = weighter.step(giou.item())
            if cfg.mi_enabled and lam > 0.0:
                z = Tensor(np.stack([p.z_pixels for p in pairs]).astype(np.float64) / 255.0)
                t_z = pool_template_features(features, tl, model.cfg.pool_templates)
                shuffled = shuffle_batch(z, mi_seed)
                estimate = jsd_mi_estimate(z, shuffled, t_z, model.statnet)
                mi_term = mi_loss(estimate, lam)
                mi_value = estimate.item()
            else:
                mi_term = Tensor(0.0)
                mi_value = 0.0

            total = total_loss(cls, giou, l1, sim, mi_term, cfg.loss_weights)
            optimizer.zero_grad()
            backward(total)

        if cfg.grad_clip > 0.0:
            _clip_grad_norm(params, cfg.grad_clip)
        optimizer.step()

        row = {
            "step": step,
            "loss_total": total.item(),
            "loss_cls": cls.item(),
            "loss_giou": giou.item(),
            "loss_l1": l1.item(),
            "loss_sim": sim.item(),
            "loss_mi": mi_term.item(),
            "mi_estimate": mi_value,
            "ema_giou": ema_before,
            "delta": delta,
            "lambda_mi": lam,
        }
        log_rows.append(row)
        if progress is not None:
            progress(row)
    return TrainResult(model=model, log_rows=log_rows)


def _clip_grad_norm(params: dict[str, Tensor], max_norm: float) -> None:
    total = 0.0
    for p in params.values():
        if p.grad is not None:
            total += float((p.grad * p.grad).sum())
    norm = np.sqrt(total)
    if norm > max_norm:
        scale = max_norm / norm
        for p in params.values():
            if p.grad is not None:
                p.grad = p.grad * scale


def format_log_csv(rows: list[dict]) -> str:
    lines = [",".join(LOG_COLUMNS)]
    for row in rows:
        lines.append(",".join(repr(row[c]) if c != "step" else str(row[c]) for c in LOG_COLUMNS))
    return "\n".join(lines) + "\n"

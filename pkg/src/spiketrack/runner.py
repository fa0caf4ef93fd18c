"""High-level runs: build, train, and evaluate trackers from one RunConfig."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bench.metrics import EvalResult, evaluate_boxes
from .bench.synthetic import generate_sequence
from .config import RunConfig
from .model import TrackerModel
from .tracking import track_sequence
from .training import PairSampler, TrainResult, train_tracker


def build_model(cfg: RunConfig, seed: int | None = None) -> TrackerModel:
    init_seed = cfg.train.seed if seed is None else seed
    return TrackerModel(cfg.model, seed=init_seed)


def training_sequences(cfg: RunConfig, seed: int | None = None) -> list[tuple[list, list]]:
    base = (cfg.train.seed if seed is None else seed) + 1_000_003
    rng = np.random.default_rng(base)
    return [
        generate_sequence(cfg.data.scene_spec(int(rng.integers(2**31))))
        for _ in range(cfg.data.num_scenes)
    ]


def build_sampler(cfg: RunConfig, seed: int | None = None) -> PairSampler:
    data_seed = (cfg.train.seed if seed is None else seed) + 1_000_003
    return PairSampler(
        training_sequences(cfg, seed),
        cfg.model,
        search_scale=cfg.eval.search_scale,
        template_scale=cfg.eval.template_scale,
        pool_pairs=cfg.data.pool_pairs,
        jitter_center_frac=cfg.data.jitter_center_frac,
        jitter_scale=cfg.data.jitter_scale,
        seed=data_seed,
    )


def run_training(cfg: RunConfig, progress=None) -> TrainResult:
    model = build_model(cfg)
    sampler = build_sampler(cfg)
    return train_tracker(model, sampler, cfg.train.train_config(), progress=progress)


@dataclass
class Evaluation:
    per_sequence: list[EvalResult]

    @property
    def success_auc(self) -> float:
        return float(np.mean([r.success_auc for r in self.per_sequence]))

    @property
    def precision(self) -> float:
        return float(np.mean([r.precision_at_20 for r in self.per_sequence]))


def heldout_sequences(cfg: RunConfig) -> list[tuple[list, list]]:
    """Evaluation scenes drawn from the data section with the eval seed."""
    out = []
    for i in range(cfg.eval.num_sequences):
        spec = cfg.data.scene_spec(cfg.eval.eval_seed + 7919 * i)
        frames, boxes = generate_sequence(spec, cfg.eval.sequence_length)
        out.append((frames, boxes))
    return out


def evaluate_model(model: TrackerModel, cfg: RunConfig) -> Evaluation:
    """One-pass tracking over held-out synthetic sequences."""
    results = []
    for frames, boxes in heldout_sequences(cfg):
        preds = track_sequence(frames, boxes[0], model, cfg.eval.tracking_config())
        results.append(
            evaluate_boxes(preds, boxes, precision_threshold=cfg.eval.precision_threshold)
        )
    return Evaluation(per_sequence=results)

"""scikit-learn style estimator facade over the spiking tracker.

fit(X) trains on a list of (frames, gt_boxes) sequences, predict(X) tracks
(frames, init_box) pairs, score(X) returns the mean success AUC against the
ground truth. All constructor arguments are plain scalars, so get_params /
set_params / clone compose with the usual tooling.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .adaptive_weight import AdaptiveWeightConfig
from .bench.metrics import evaluate_boxes
from .head import LossWeights
from .model import ModelConfig, TrackerModel
from .tracking import TrackingConfig, track_sequence
from .training import PairSampler, TrainConfig, train_tracker
from .validation import check_box, check_frames, check_sequences


class SpikingTrackerEstimator(BaseEstimator):
    """Single-object tracker with MI-regularized spiking-transformer training."""

    def __init__(
        self,
        embed_dim: int = 32,
        num_blocks: int = 1,
        heads: int = 2,
        stride: int = 16,
        t_max: int = 4,
        mlp_ratio: float = 2.0,
        head_width: int = 16,
        surrogate: str = "window",
        steps: int = 400,
        batch_size: int = 8,
        lr: float = 1e-3,
        weight_decay: float = 1e-4,
        grad_clip: float = 0.0,
        mi_enabled: bool = True,
        lambda_base: float = 0.1,
        beta: float = 0.5,
        eta: float = 10.0,
        ema_momentum: float = 0.9,
        sign_mode: str = "as_written",
        lambda_iou: float = 2.0,
        lambda_l1: float = 5.0,
        lambda_sim: float = 0.1,
        pool_pairs: int = 192,
        jitter_center_frac: float = 0.10,
        jitter_scale: float = 0.15,
        search_scale: float = 4.0,
        template_scale: float = 2.0,
        window_penalty: bool = True,
        seed: int = 0,
    ):
        self.embed_dim = embed_dim
        self.num_blocks = num_blocks
        self.heads = heads
        self.stride = stride
        self.t_max = t_max
        self.mlp_ratio = mlp_ratio
        self.head_width = head_width
        self.surrogate = surrogate
        self.steps = steps
        self.batch_size = batch_size
        self.lr = lr
        self.weight_decay = weight_decay
        self.grad_clip = grad_clip
        self.mi_enabled = mi_enabled
        self.lambda_base = lambda_base
        self.beta = beta
        self.eta = eta
        self.ema_momentum = ema_momentum
        self.sign_mode = sign_mode
        self.lambda_iou = lambda_iou
        self.lambda_l1 = lambda_l1
        self.lambda_sim = lambda_sim
        self.pool_pairs = pool_pairs
        self.jitter_center_frac = jitter_center_frac
        self.jitter_scale = jitter_scale
        self.search_scale = search_scale
        self.template_scale = template_scale
        self.window_penalty = window_penalty
        self.seed = seed

    # -- configuration assembly ------------------------------------------

    def _model_config(self) -> ModelConfig:
        return ModelConfig(
            embed_dim=self.embed_dim,
            num_blocks=self.num_blocks,
            heads=self.heads,
            stride=self.stride,
            t_max=self.t_max,
            mlp_ratio=self.mlp_ratio,
            head_width=self.head_width,
            surrogate=self.surrogate,
        )

    def _train_config(self) -> TrainConfig:
        return TrainConfig(
            batch_size=self.batch_size,
            steps=self.steps,
            lr=self.lr,
            weight_decay=self.weight_decay,
            grad_clip=self.grad_clip,
            seed=self.seed,
            mi_enabled=self.mi_enabled,
            loss_weights=LossWeights(
                lambda_iou=self.lambda_iou,
                lambda_l1=self.lambda_l1,
                lambda_sim=self.lambda_sim,
            ),
            amim=AdaptiveWeightConfig(
                lambda_base=self.lambda_base,
                beta=self.beta,
                eta=self.eta,
                ema_momentum=self.ema_momentum,
                sign_mode=self.sign_mode,
            ),
        )

    def _tracking_config(self) -> TrackingConfig:
        return TrackingConfig(
            search_scale=self.search_scale,
            template_scale=self.template_scale,
            window_penalty=self.window_penalty,
        )

    # -- estimator API ------------------------------------------------------

    def fit(self, X, y=None) -> "SpikingTrackerEstimator":
        """Train on sequences: X is an iterable of (frames, gt_boxes) pairs."""
        sequences = check_sequences(X)
        model = TrackerModel(self._model_config(), seed=self.seed)
        sampler = PairSampler(
            sequences,
            model.cfg,
            search_scale=self.search_scale,
            template_scale=self.template_scale,
            pool_pairs=self.pool_pairs,
            jitter_center_frac=self.jitter_center_frac,
            jitter_scale=self.jitter_scale,
            seed=self.seed + 1_000_003,
        )
        result = train_tracker(model, sampler, self._train_config())
        self.model_ = result.model
        self.log_rows_ = result.log_rows
        return self

    def _require_fitted(self) -> TrackerModel:
        model = getattr(self, "model_", None)
        if model is None:
            raise NotFittedError("fit the estimator before predict/score")
        return model

    def predict(self, X) -> list[np.ndarray]:
        """Track each (frames, init_box) pair; returns (n_frames, 4) corner boxes."""
        model = self._require_fitted()
        single = isinstance(X, tuple) and len(X) == 2 and not isinstance(X[0], tuple)
        items = [X] if single else list(X)
        outputs = []
        for frames, init_box in items:
            frames = check_frames(frames)
            boxes = track_sequence(frames, check_box(init_box), model, self._tracking_config())
            outputs.append(np.array([b.corner_size() for b in boxes]))
        return outputs[0] if single else outputs

    def score(self, X, y=None) -> float:
        """Mean success AUC over sequences with ground truth boxes."""
        model = self._require_fitted()
        sequences = check_sequences(X)
        aucs = []
        for frames, boxes in sequences:
            preds = track_sequence(frames, boxes[0], model, self._tracking_config())
            aucs.append(evaluate_boxes(preds, boxes).success_auc)
        return float(np.mean(aucs))

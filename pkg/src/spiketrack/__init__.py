"""Spiking-transformer single-object tracking with MI-regularized training.

The stack: a tape-based float64 autodiff engine, multi-spike neurons and a
spike-driven transformer backbone over fused template/search images, a
Jensen-Shannon mutual-information term with difficulty-adaptive weighting,
a spiking center prediction head, Hanning-window inference, a synthetic
benchmark with precision/success metrics, and synaptic-operation energy
accounting. `SpikingTrackerEstimator` wraps training and inference behind
the scikit-learn fit/predict/score API.
"""

from .adaptive_weight import (
    AdaptiveWeightConfig,
    AdaptiveWeighter,
    AdaptiveWeightState,
    compute_delta,
    compute_lambda,
    update_ema,
)
from .autodiff import Tape, Tensor, backward, gradcheck, no_grad, ops
from .config import RunConfig, dump_config, load_config, parse_config, save_config
from .energy import EnergyProfile, LayerOpsSpec, count_ops, estimate_energy, profile_model
from .estimator import SpikingTrackerEstimator
from .head import BBox, CenterHead, LossWeights, ScoreMaps, decode_box, encode_box
from .model import ModelConfig, TrackerModel
from .tracking import (
    SingleObjectTracker,
    TrackingConfig,
    crop_region,
    hann_window,
    hann_window_2d,
    penalized_decode,
    track_sequence,
)
from .training import AdamW, DataConfig, PairSampler, TrainConfig, train_tracker

__version__ = "0.1.0"

__all__ = [
    "AdamW",
    "AdaptiveWeightConfig",
    "AdaptiveWeightState",
    "AdaptiveWeighter",
    "BBox",
    "CenterHead",
    "DataConfig",
    "EnergyProfile",
    "LayerOpsSpec",
    "LossWeights",
    "ModelConfig",
    "PairSampler",
    "RunConfig",
    "ScoreMaps",
    "SingleObjectTracker",
    "SpikingTrackerEstimator",
    "Tape",
    "Tensor",
    "TrackerModel",
    "TrackingConfig",
    "TrainConfig",
    "backward",
    "compute_delta",
    "compute_lambda",
    "count_ops",
    "crop_region",
    "decode_box",
    "dump_config",
    "encode_box",
    "estimate_energy",
    "gradcheck",
    "hann_window",
    "hann_window_2d",
    "load_config",
    "no_grad",
    "ops",
    "parse_config",
    "penalized_decode",
    "profile_model",
    "save_config",
    "track_sequence",
    "train_tracker",
    "update_ema",
    "__version__",
]

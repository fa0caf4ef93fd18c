"""Mutual-information maximization: estimator, shuffling, statistics networks."""

from .estimator import (
    ZERO_SCORER_VALUE,
    ShuffledBatch,
    jsd_mi_estimate,
    mi_loss,
    pool_template_features,
    shuffle_batch,
)
from .statnet import MlpStatisticsNetwork, TemplateStatisticsNetwork

__all__ = [
    "MlpStatisticsNetwork",
    "ShuffledBatch",
    "TemplateStatisticsNetwork",
    "ZERO_SCORER_VALUE",
    "jsd_mi_estimate",
    "mi_loss",
    "pool_template_features",
    "shuffle_batch",
]

"""Difficulty-aware weighting of the MI term from an EMA of the box loss.

Per batch: delta = tanh(eta * (ema - current)) and
lambda_mi = max(0, lambda_base + beta * delta). The delta always uses the
EMA from *before* the current batch is absorbed; update_ema runs after.

sign_mode selects the direction of the difficulty response:
  - "as_written": harder-than-average batches (current > ema) shrink lambda_mi
  - "prose_intent": the opposite, hard batches grow lambda_mi
Both are first-class because the two published descriptions disagree.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

AS_WRITTEN = "as_written"
PROSE_INTENT = "prose_intent"
SIGN_MODES = (AS_WRITTEN, PROSE_INTENT)


class SchedulerError(ValueError):
    pass


@dataclass
class AdaptiveWeightConfig:
    lambda_base: float = 0.1
    beta: float = 0.5
    eta: float = 10.0
    ema_momentum: float = 0.9
    sign_mode: str = AS_WRITTEN

    def __post_init__(self):
        if self.lambda_base < 0:
            raise SchedulerError(f"lambda_base must be >= 0, got {self.lambda_base}")
        if self.beta < 0:
            raise SchedulerError(f"beta must be >= 0, got {self.beta}")
        if self.eta <= 0:
            raise SchedulerError(f"eta must be > 0, got {self.eta}")
        if not 0.0 < self.ema_momentum < 1.0:
            raise SchedulerError(f"ema_momentum must be in (0, 1), got {self.ema_momentum}")
        if self.sign_mode not in SIGN_MODES:
            raise SchedulerError(f"sign_mode must be one of {SIGN_MODES}")


@dataclass
class AdaptiveWeightState:
    """EMA of the box-regression loss; uninitialized until the first batch."""

    ema_giou: float | None = None
    step_count: int = 0

    @property
    def initialized(self) -> bool:
        return self.ema_giou is not None


def compute_delta(state: AdaptiveWeightState, giou_loss: float, cfg: AdaptiveWeightConfig) -> float:
    """tanh-squashed difficulty gap; 0 on the very first batch (no history)."""
    if not math.isfinite(giou_loss):
        raise SchedulerError(f"non-finite GIoU loss {giou_loss}")
    if not state.initialized:
        return 0.0
    gap = state.ema_giou - giou_loss
    if cfg.sign_mode == PROSE_INTENT:
        gap = -gap
    return math.tanh(cfg.eta * gap)


def compute_lambda(delta: float, cfg: AdaptiveWeightConfig) -> float:
    """max(0, lambda_base + beta * delta), bounded by lambda_base + beta."""
    if not -1.0 <= delta <= 1.0:
        raise SchedulerError(f"delta {delta} outside [-1, 1]")
    return max(0.0, cfg.lambda_base + cfg.beta * delta)


def update_ema(
    state: AdaptiveWeightState, giou_loss: float, cfg: AdaptiveWeightConfig
) -> AdaptiveWeightState:
    """Absorb the current batch loss; first batch initializes the EMA to it."""
    if not math.isfinite(giou_loss):
        raise SchedulerError(f"non-finite GIoU loss {giou_loss}")
    if not state.initialized:
        ema = giou_loss
    else:
        m = cfg.ema_momentum
        ema = m * state.ema_giou + (1.0 - m) * giou_loss
    return AdaptiveWeightState(ema_giou=ema, step_count=state.step_count + 1)


@dataclass
class AdaptiveWeighter:
    """Stateful wrapper: one step() per batch, ordered delta-then-update."""

    cfg: AdaptiveWeightConfig
    state: AdaptiveWeightState = field(default_factory=AdaptiveWeightState)

    def step(self, giou_loss: float) -> tuple[float, float, float]:
        """Returns (lambda_mi, delta, ema_before_update) for this batch."""
        delta = compute_delta(self.state, giou_loss, self.cfg)
        lam = compute_lambda(delta, self.cfg)
        ema_before = self.state.ema_giou if self.state.initialized else giou_loss
        self.state = update_ema(self.state, giou_loss, self.cfg)
        return lam, delta, ema_before

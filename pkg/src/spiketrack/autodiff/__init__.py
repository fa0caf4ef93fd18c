"""Tape-based reverse-mode automatic differentiation over dense float64 arrays."""

from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .gradcheck import GradCheckReport, gradcheck
from .tensor import (
    AutodiffError,
    Tape,
    Tensor,
    active_tape,
    backward,
    no_grad,
    reset_tape,
    set_debug,
)
from . import ops

__all__ = [
    "AutodiffError",
    "CheckpointError",
    "GradCheckReport",
    "Tape",
    "Tensor",
    "active_tape",
    "backward",
    "gradcheck",
    "load_checkpoint",
    "no_grad",
    "ops",
    "reset_tape",
    "save_checkpoint",
    "set_debug",
]

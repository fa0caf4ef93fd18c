"""Multi-spike neurons: bounded integer spike counts with surrogate gradients."""

from __future__ import annotations

import threading
from dataclasses import dataclass

import numpy as np

from ..autodiff.ops import custom_op
from ..autodiff.tensor import AutodiffError, Tensor
from . import surrogate


class SpikeTensor(Tensor):
    """Activation tensor of integer spike counts in [0, t_max]."""

    __slots__ = ("t_max",)

    def __init__(self, data, requires_grad: bool = False):
        super().__init__(data, requires_grad)
        self.t_max = 0  # set by the producing op

    def check_invariants(self) -> None:
        if self.t_max < 1:
            raise AutodiffError(f"SpikeTensor t_max must be >= 1, got {self.t_max}")
        if not np.array_equal(self.data, np.round(self.data)):
            raise AutodiffError("SpikeTensor holds non-integer counts")
        if self.data.size and (self.data.min() < 0 or self.data.max() > self.t_max):
            raise AutodiffError("SpikeTensor counts outside [0, t_max]")

    @property
    def firing_rate(self) -> float:
        """Mean spike count normalized by t_max, in [0, 1]."""
        return float(self.data.mean() / self.t_max) if self.data.size else 0.0


_audit = threading.local()


class collect_spikes:
    """Context manager that collects every spike output produced inside it.

    Used by the type-audit tests and by firing-rate instrumentation.
    """

    def __enter__(self) -> list:
        self.tensors: list[SpikeTensor] = []
        stack = getattr(_audit, "stack", None)
        if stack is None:
            stack = []
            _audit.stack = stack
        stack.append(self.tensors)
        return self.tensors

    def __exit__(self, *exc) -> bool:
        _audit.stack.pop()
        return False


def _notify_audit(out: SpikeTensor) -> None:
    for sink in getattr(_audit, "stack", ()):
        sink.append(out)


@dataclass
class MultiSpikeNeuron:
    """Emits clip(round(membrane / threshold), 0, t_max) spikes per element.

    `round` is round-half-up, so counts step at membrane = threshold*(k - 1/2).
    Backward always uses the configured surrogate derivative; the true
    derivative is zero almost everywhere and never used.
    """

    threshold: float = 1.0
    t_max: int = 4
    surrogate: str = surrogate.WINDOW
    surrogate_width: float = 1.0

    def __post_init__(self):
        if self.threshold <= 0:
            raise ValueError(f"threshold must be > 0, got {self.threshold}")
        if self.t_max < 1:
            raise ValueError(f"t_max must be >= 1, got {self.t_max}")
        if self.surrogate_width <= 0:
            raise ValueError(f"surrogate_width must be > 0, got {self.surrogate_width}")
        if self.surrogate not in surrogate.SURROGATES:
            raise ValueError(f"unknown surrogate {self.surrogate!r}")

    def surrogate_derivative(self, membrane: np.ndarray) -> np.ndarray:
        return surrogate.surrogate_derivative(
            self.surrogate, membrane, self.threshold, self.t_max, self.surrogate_width
        )

    def __call__(self, membrane: Tensor, relaxed: bool = False) -> Tensor:
        return self.forward(membrane, relaxed=relaxed)

    def forward(self, membrane: Tensor, relaxed: bool = False) -> Tensor:
        """Spike counts for a membrane tensor.

        relaxed=True swaps the integer rounding for its continuous relaxation
        clip(m/theta, 0, t_max) whose true derivative is the window surrogate;
        finite-difference checks probe the surrogate through this mode.
        """
        if relaxed:
            value = np.clip(membrane.data / self.threshold, 0.0, float(self.t_max))
            deriv = surrogate.window_derivative(membrane.data, self.threshold, self.t_max)
            return custom_op(value, (membrane,), lambda g: (g * deriv,), "spike_relaxed")

        counts = membrane.data / self.threshold
        counts += 0.5
        np.floor(counts, out=counts)
        np.clip(counts, 0.0, float(self.t_max), out=counts)
        mdata = membrane.data
        neuron = self

        def bwd(g):
            return (g * neuron.surrogate_derivative(mdata),)

        out = custom_op(counts, (membrane,), bwd, "spike", cls=SpikeTensor)
        out.t_max = self.t_max
        _notify_audit(out)
        return out

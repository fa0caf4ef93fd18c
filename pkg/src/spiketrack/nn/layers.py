"""Trainable layers over the autodiff primitives.

Module gives parameter registration, dotted parameter names, train/eval mode,
and the per-layer bookkeeping (MAC counts, input firing rates) the energy
estimator reads after a profiling forward.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..autodiff import ops
from ..autodiff.tensor import AutodiffError, Tensor
from .neuron import MultiSpikeNeuron, SpikeTensor


@dataclass
class EnergyEntry:
    """One contraction's static cost plus its measured input activity."""

    name: str
    macs_per_sample: int
    is_spiking: bool
    input_rate: float


class Module:
    """Minimal parameter container with dotted names and train/eval mode."""

    def __init__(self):
        object.__setattr__(self, "_params", {})
        object.__setattr__(self, "_buffers", {})
        object.__setattr__(self, "_modules", {})
        object.__setattr__(self, "training", True)

    def __setattr__(self, name, value):
        if isinstance(value, Tensor) and not isinstance(value, SpikeTensor):
            self._params[name] = value
        elif isinstance(value, Module):
            self._modules[name] = value
        elif name in self._buffers:
            self._buffers[name] = value
        object.__setattr__(self, name, value)

    def register_buffer(self, name: str, value: np.ndarray) -> None:
        self._buffers[name] = value
        object.__setattr__(self, name, value)

    def named_parameters(self, prefix: str = "") -> dict[str, Tensor]:
        out = {prefix + name: p for name, p in self._params.items()}
        for child_name, child in self._modules.items():
            out.update(child.named_parameters(f"{prefix}{child_name}."))
        return out

    def named_buffers(self, prefix: str = "") -> dict[str, np.ndarray]:
        out = {prefix + name: getattr(self, name) for name in self._buffers}
        for child_name, child in self._modules.items():
            out.update(child.named_buffers(f"{prefix}{child_name}."))
        return out

    def load_state(self, state: dict[str, np.ndarray], prefix: str = "") -> None:
        """Copy values into parameters and buffers by dotted name."""
        for name, tensor in self.named_parameters(prefix).items():
            if name not in state:
                raise AutodiffError(f"missing parameter {name!r} in state")
            arr = np.asarray(state[name], dtype=np.float64)
            if arr.shape != tensor.shape:
                raise AutodiffError(
                    f"parameter {name!r}: checkpoint shape {arr.shape} != model {tensor.shape}"
                )
            tensor.data = arr
        for name in self.named_buffers(prefix):
            if name in state:
                self._assign_buffer(name[len(prefix):], np.asarray(state[name]))

    def _assign_buffer(self, dotted: str, value: np.ndarray) -> None:
        mod = self
        parts = dotted.split(".")
        for part in parts[:-1]:
            mod = mod._modules[part]
        mod.register_buffer(parts[-1], value)

    def state(self) -> dict[str, np.ndarray]:
        out = {name: p.data for name, p in self.named_parameters().items()}
        out.update(self.named_buffers())
        return out

    def train(self, mode: bool = True) -> "Module":
        object.__setattr__(self, "training", mode)
        for child in self._modules.values():
            child.train(mode)
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def energy_entries(self, prefix: str = "") -> list[EnergyEntry]:
        out: list[EnergyEntry] = []
        for child_name, child in self._modules.items():
            out.extend(child.energy_entries(f"{prefix}{child_name}."))
        return out

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


class ModuleList(Module):
    def __init__(self, modules):
        super().__init__()
        self._items = list(modules)
        for i, mod in enumerate(self._items):
            self._modules[str(i)] = mod

    def __iter__(self):
        return iter(self._items)

    def __len__(self):
        return len(self._items)

    def __getitem__(self, i):
        return self._items[i]


def _observe_input(layer: Module, x: Tensor) -> None:
    if isinstance(x, SpikeTensor):
        layer.spiking_input = True
        layer.last_input_rate = x.firing_rate
    else:
        layer.spiking_input = False
        layer.last_input_rate = 1.0


class Linear(Module):
    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator, bias: bool = True):
        super().__init__()
        self.in_features = in_features
        self.out_features = out_features
        scale = np.sqrt(2.0 / in_features)
        self.weight = Tensor(rng.normal(0.0, scale, (in_features, out_features)), requires_grad=True)
        self.bias = Tensor(np.zeros(out_features), requires_grad=True) if bias else None
        self.spiking_input = False
        self.last_input_rate = 1.0
        self.last_macs_per_sample = 0

    def forward(self, x: Tensor) -> Tensor:
        _observe_input(self, x)
        if x.ndim < 2 or x.shape[-1] != self.in_features:
            raise AutodiffError(
                f"Linear: expected (..., {self.in_features}), got {x.shape}"
            )
        out = ops.matmul(x, self.weight)
        if self.bias is not None:
            out = ops.add(out, self.bias)
        positions = int(np.prod(x.shape[1:-1], dtype=np.int64))  # dim 0 is the batch
        self.last_macs_per_sample = positions * self.in_features * self.out_features
        return out

    def energy_entries(self, prefix: str = "") -> list[EnergyEntry]:
        return [
            EnergyEntry(
                prefix.rstrip("."),
                self.last_macs_per_sample,
                self.spiking_input,
                self.last_input_rate,
            )
        ]


class Conv2d(Module):
    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        kernel: int,
        rng: np.random.Generator,
        stride: int = 1,
        pad: int = 0,
        bias: bool = True,
    ):
        super().__init__()
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel = kernel
        self.stride = stride
        self.pad = pad
        fan_in = in_channels * kernel * kernel
        scale = np.sqrt(2.0 / fan_in)
        self.weight = Tensor(
            rng.normal(0.0, scale, (out_channels, in_channels, kernel, kernel)),
            requires_grad=True,
        )
        self.bias = Tensor(np.zeros(out_channels), requires_grad=True) if bias else None
        self.spiking_input = False
        self.last_input_rate = 1.0
        self.last_macs_per_sample = 0

    def forward(self, x: Tensor) -> Tensor:
        _observe_input(self, x)
        out = ops.conv2d(x, self.weight, self.bias, stride=self.stride, pad=self.pad)
        out_elems = out.shape[1] * out.shape[2] * self.out_channels
        self.last_macs_per_sample = out_elems * self.in_channels * self.kernel * self.kernel
        return out

    def energy_entries(self, prefix: str = "") -> list[EnergyEntry]:
        return [
            EnergyEntry(
                prefix.rstrip("."),
                self.last_macs_per_sample,
                self.spiking_input,
                self.last_input_rate,
            )
        ]


class BatchNorm(Module):
    """Batch normalization: batch stats in train mode, running stats in eval."""

    def __init__(self, num_features: int, channel_axis: int = -1, momentum: float = 0.1, eps: float = 1e-5):
        super().__init__()
        self.num_features = num_features
        self.channel_axis = channel_axis
        self.momentum = momentum
        self.eps = eps
        self.gamma = Tensor(np.ones(num_features), requires_grad=True)
        self.beta = Tensor(np.zeros(num_features), requires_grad=True)
        self.register_buffer("running_mean", np.zeros(num_features))
        self.register_buffer("running_var", np.ones(num_features))

    def forward(self, x: Tensor) -> Tensor:
        if self.training:
            out, mu, var = ops.batch_norm(
                x, self.gamma, self.beta, channel_axis=self.channel_axis, eps=self.eps
            )
            m = x.size // self.num_features
            unbiased = var * (m / max(m - 1, 1))
            self.running_mean = (1 - self.momentum) * self.running_mean + self.momentum * mu
            self.running_var = (1 - self.momentum) * self.running_var + self.momentum * unbiased
            return out
        return ops.batch_norm_inference(
            x,
            self.gamma,
            self.beta,
            self.running_mean,
            self.running_var,
            channel_axis=self.channel_axis,
            eps=self.eps,
        )


class SpikeConv(Module):
    """Multi-spike convolutional layer: spike the input, convolve, normalize."""

    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        kernel: int,
        neuron: MultiSpikeNeuron,
        rng: np.random.Generator,
        stride: int = 1,
        pad: int = 0,
    ):
        super().__init__()
        self.neuron = neuron
        self.conv = Conv2d(in_channels, out_channels, kernel, rng, stride=stride, pad=pad, bias=False)
        self.norm = BatchNorm(out_channels, channel_axis=-1)

    def forward(self, x: Tensor, relaxed: bool = False) -> Tensor:
        spikes = self.neuron(x, relaxed=relaxed)
        return self.norm(self.conv(spikes))

"""Spiking neuron primitives, layers, patch fusion, and the backbone."""

from .backbone import (
    BackboneConfig,
    SpikingBackbone,
    TokenLayout,
    add_embeddings,
    token_layout,
)
from .layers import BatchNorm, Conv2d, EnergyEntry, Linear, Module, ModuleList, SpikeConv
from .neuron import MultiSpikeNeuron, SpikeTensor, collect_spikes
from .patch import (
    HORIZONTAL,
    SEARCH,
    TEMPLATE1,
    TEMPLATE2,
    VERTICAL,
    JointInput,
    PatchError,
    fuse_with_layout,
    random_patch_fuse,
    unfuse,
)
from . import surrogate

__all__ = [
    "BackboneConfig",
    "BatchNorm",
    "Conv2d",
    "EnergyEntry",
    "HORIZONTAL",
    "JointInput",
    "Linear",
    "Module",
    "ModuleList",
    "MultiSpikeNeuron",
    "PatchError",
    "SEARCH",
    "SpikeConv",
    "SpikeTensor",
    "SpikingBackbone",
    "TEMPLATE1",
    "TEMPLATE2",
    "TokenLayout",
    "VERTICAL",
    "add_embeddings",
    "collect_spikes",
    "fuse_with_layout",
    "random_patch_fuse",
    "surrogate",
    "token_layout",
    "unfuse",
]

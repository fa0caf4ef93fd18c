"""Full tracker model: backbone + center head + statistics network.

The statistics network participates in training only; inference (and the
energy profile) runs the backbone and head.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .autodiff import load_checkpoint, ops, save_checkpoint
from .autodiff.tensor import AutodiffError, Tensor
from .head import CenterHead, ScoreMaps
from .mi.statnet import TemplateStatisticsNetwork
from .nn.backbone import BackboneConfig, SpikingBackbone, TokenLayout, token_layout
from .nn.layers import EnergyEntry, Module


@dataclass
class ModelConfig:
    embed_dim: int = 64
    num_blocks: int = 2
    stride: int = 16
    t_max: int = 4
    heads: int = 2
    mlp_ratio: float = 2.0
    threshold: float = 1.0
    surrogate: str = "window"
    surrogate_width: float = 1.0
    template_size: int = 128
    search_size: int = 256
    head_width: int = 32
    statnet_hidden: int = 32
    pool_templates: str = "both"  # or "template1": which templates feed t_Z

    def backbone_config(self) -> BackboneConfig:
        return BackboneConfig(
            embed_dim=self.embed_dim,
            num_blocks=self.num_blocks,
            stride=self.stride,
            t_max=self.t_max,
            heads=self.heads,
            mlp_ratio=self.mlp_ratio,
            threshold=self.threshold,
            surrogate=self.surrogate,
            surrogate_width=self.surrogate_width,
            template_size=self.template_size,
            search_size=self.search_size,
        )

    @property
    def statnet_channels(self) -> int:
        return 6 if self.pool_templates == "both" else 3


def select_tokens(features: Tensor, idx: np.ndarray) -> Tensor:
    """Gather a fixed token subset from (B, N, D) features, per sample."""
    b, n, d = features.shape
    flat = ops.reshape(features, (b * n, d))
    offsets = (np.arange(b) * n)[:, None] + np.asarray(idx)[None, :]
    rows = ops.index_rows(flat, offsets.reshape(-1), assume_unique=True)
    return ops.reshape(rows, (b, len(idx), d))


class TrackerModel(Module):
    def __init__(self, cfg: ModelConfig, seed: int = 0):
        super().__init__()
        self.cfg = cfg
        rng = np.random.default_rng(seed)
        bcfg = cfg.backbone_config()
        self.backbone = SpikingBackbone(bcfg, rng)
        self.head = CenterHead(cfg.embed_dim, cfg.head_width, bcfg.neuron(), rng)
        self.statnet = TemplateStatisticsNetwork(
            feature_dim=cfg.embed_dim,
            rng=rng,
            side=cfg.template_size,
            channels=cfg.statnet_channels,
            hidden=cfg.statnet_hidden,
        )

    def layout(self, name: str) -> TokenLayout:
        return token_layout(
            name, self.cfg.stride, self.cfg.template_size, self.cfg.search_size
        )

    def forward_maps(
        self, images: np.ndarray, layout_name: str, relaxed: bool = False
    ) -> tuple[ScoreMaps, Tensor, TokenLayout, dict[str, float]]:
        """Fused images -> (score maps, token features, layout, firing rates)."""
        features, stats = self.backbone.forward(images, layout_name, relaxed=relaxed)
        tl = self.layout(layout_name)
        search = select_tokens(features, tl.search_idx)
        maps = self.head(search, relaxed=relaxed)
        stats.update(
            {
                e.name: e.input_rate
                for e in self.head.energy_entries("head.")
                if e.is_spiking
            }
        )
        return maps, features, tl, stats

    def inference_energy_entries(self) -> list[EnergyEntry]:
        """Per-inference contractions: backbone and head, no statistics net."""
        return self.backbone.energy_entries("backbone.") + self.head.energy_entries(
            "head."
        )

    # -- checkpointing ------------------------------------------------------

    def save(self, path) -> None:
        params = self.named_parameters()
        buffers = {k: Tensor(v) for k, v in self.named_buffers().items()}
        save_checkpoint(path, {**params, **buffers}, extra={"model": asdict(self.cfg)})

    @staticmethod
    def load(path, expected: ModelConfig | None = None, seed: int = 0) -> "TrackerModel":
        state, extra = load_checkpoint(path)
        stored = extra.get("model")
        if stored is None:
            raise AutodiffError("checkpoint carries no model configuration")
        cfg = ModelConfig(**stored)
        if expected is not None and asdict(expected) != asdict(cfg):
            raise AutodiffError(
                "checkpoint architecture does not match the requested configuration: "
                f"{stored} != {asdict(expected)}"
            )
        model = TrackerModel(cfg, seed=seed)
        model.load_state(state)
        return model

"""Tiny spike-driven transformer backbone over fused template/search images.

Every weight except the analog-input patch embedding consumes spike counts,
so each contraction is accumulate-only; attention is the softmax-free linear
form q (k^T v) normalized by N * t_max^2.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from ..autodiff import ops
from ..autodiff.tensor import AutodiffError, Tensor
from .layers import BatchNorm, Conv2d, EnergyEntry, Linear, Module, ModuleList
from .neuron import MultiSpikeNeuron
from .patch import HORIZONTAL, SEARCH, TEMPLATE1, TEMPLATE2, VERTICAL


@dataclass
class BackboneConfig:
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

    def __post_init__(self):
        if self.search_size % self.stride or self.template_size % self.stride:
            raise ValueError(
                f"stride {self.stride} must divide template {self.template_size} "
                f"and search {self.search_size} sizes"
            )
        if self.embed_dim % self.heads:
            raise ValueError(f"embed_dim {self.embed_dim} not divisible by heads {self.heads}")

    @property
    def template_grid(self) -> int:
        return self.template_size // self.stride

    @property
    def search_grid(self) -> int:
        return self.search_size // self.stride

    @property
    def num_tokens(self) -> int:
        return 2 * self.template_grid**2 + self.search_grid**2

    def neuron(self) -> MultiSpikeNeuron:
        return MultiSpikeNeuron(
            threshold=self.threshold,
            t_max=self.t_max,
            surrogate=self.surrogate,
            surrogate_width=self.surrogate_width,
        )


@dataclass(frozen=True)
class TokenLayout:
    """Index bookkeeping for one fused-image layout at a fixed stride."""

    layout: str
    grid_shape: tuple[int, int]
    type_ids: np.ndarray  # (N,) in {TEMPLATE1, TEMPLATE2, SEARCH}
    pos_ids: np.ndarray  # (N,) region-local positional rows
    t1_idx: np.ndarray  # flat token indices of each region, row-major
    t2_idx: np.ndarray
    search_idx: np.ndarray
    map_side: int


@lru_cache(maxsize=8)
def token_layout(
    layout: str, stride: int, template_size: int = 128, search_size: int = 256
) -> TokenLayout:
    tg = template_size // stride
    sg = search_size // stride
    if layout == HORIZONTAL:
        gh, gw = sg, tg + sg  # 16 x 24 at the default sizes
    elif layout == VERTICAL:
        gh, gw = tg + sg, sg
    else:
        raise AutodiffError(f"unknown layout {layout!r}")

    grid = np.full((gh, gw), SEARCH, dtype=np.int64)
    if layout == HORIZONTAL:
        grid[:tg, :tg] = TEMPLATE1
        grid[tg : 2 * tg, :tg] = TEMPLATE2
        origins = {TEMPLATE1: (0, 0), TEMPLATE2: (tg, 0), SEARCH: (0, tg)}
    else:
        grid[:tg, :tg] = TEMPLATE1
        grid[:tg, tg : 2 * tg] = TEMPLATE2
        origins = {TEMPLATE1: (0, 0), TEMPLATE2: (0, tg), SEARCH: (tg, 0)}
    widths = {TEMPLATE1: tg, TEMPLATE2: tg, SEARCH: sg}
    bases = {TEMPLATE1: 0, TEMPLATE2: tg * tg, SEARCH: 2 * tg * tg}

    type_ids = grid.reshape(-1)
    rows, cols = np.divmod(np.arange(gh * gw), gw)
    pos_ids = np.empty(gh * gw, dtype=np.int64)
    for region in (TEMPLATE1, TEMPLATE2, SEARCH):
        mask = type_ids == region
        r0, c0 = origins[region]
        pos_ids[mask] = bases[region] + (rows[mask] - r0) * widths[region] + (cols[mask] - c0)

    return TokenLayout(
        layout=layout,
        grid_shape=(gh, gw),
        type_ids=type_ids,
        pos_ids=pos_ids,
        t1_idx=np.flatnonzero(type_ids == TEMPLATE1),
        t2_idx=np.flatnonzero(type_ids == TEMPLATE2),
        search_idx=np.flatnonzero(type_ids == SEARCH),
        map_side=sg,
    )


def add_embeddings(
    tokens: Tensor,
    pos_table: Tensor,
    pos_ids: np.ndarray,
    type_table: Tensor,
    type_ids: np.ndarray,
) -> Tensor:
    """tokens + positional rows + type rows, one row of each per token."""
    n = tokens.shape[-2]
    if len(pos_ids) != n or len(type_ids) != n:
        raise AutodiffError(
            f"add_embeddings: {n} tokens but {len(pos_ids)} position ids "
            f"and {len(type_ids)} type ids"
        )
    pos = ops.index_rows(pos_table, pos_ids, assume_unique=True)
    typ = ops.index_rows(type_table, type_ids)
    return ops.add(ops.add(tokens, pos), typ)


class SpikeAttention(Module):
    """Linear spike attention: q (k^T v) / (N t_max^2) headwise, spiking throughout."""

    def __init__(self, dim: int, heads: int, neuron: MultiSpikeNeuron, rng: np.random.Generator):
        super().__init__()
        self.dim = dim
        self.heads = heads
        self.neuron = neuron
        self.wq = Linear(dim, dim, rng, bias=False)
        self.wk = Linear(dim, dim, rng, bias=False)
        self.wv = Linear(dim, dim, rng, bias=False)
        self.wo = Linear(dim, dim, rng, bias=False)
        self.norm_q = BatchNorm(dim)
        self.norm_k = BatchNorm(dim)
        self.norm_v = BatchNorm(dim)
        self.norm_a = BatchNorm(dim)
        self.norm_o = BatchNorm(dim)
        self.last_contraction_macs = 0
        self.last_qkv_rate = 1.0

    def _split_heads(self, x: Tensor, b: int, n: int) -> Tensor:
        # (B, N, D) -> (B, H, N, dh) as a view; stacked matmul reads it directly
        dh = self.dim // self.heads
        return ops.permute(ops.reshape(x, (b, n, self.heads, dh)), (0, 2, 1, 3))

    def forward(self, x: Tensor, relaxed: bool = False) -> Tensor:
        b, n, _ = x.shape
        s_in = self.neuron(x, relaxed=relaxed)
        q = self.neuron(self.norm_q(self.wq(s_in)), relaxed=relaxed)
        k = self.neuron(self.norm_k(self.wk(s_in)), relaxed=relaxed)
        v = self.neuron(self.norm_v(self.wv(s_in)), relaxed=relaxed)
        self.last_qkv_rate = float(np.mean([t.data.mean() for t in (q, k, v)])) / self.neuron.t_max

        qh = self._split_heads(q, b, n)
        kh = self._split_heads(k, b, n)
        vh = self._split_heads(v, b, n)
        kv = ops.matmul(ops.permute(kh, (0, 1, 3, 2)), vh)  # (B, H, dh, dh)
        scale = 1.0 / (n * self.neuron.t_max**2)
        att = ops.mul(ops.matmul(qh, kv), Tensor(scale))
        att = ops.reshape(ops.permute(att, (0, 2, 1, 3)), (b, n, self.dim))

        dh = self.dim // self.heads
        self.last_contraction_macs = 2 * n * self.dim * dh  # k^T v plus q (kv), per sample

        out = self.norm_o(self.wo(self.neuron(self.norm_a(att), relaxed=relaxed)))
        return out

    def energy_entries(self, prefix: str = "") -> list[EnergyEntry]:
        entries = super().energy_entries(prefix)
        entries.append(
            EnergyEntry(
                f"{prefix}contraction",
                self.last_contraction_macs,
                True,
                self.last_qkv_rate,
            )
        )
        return entries


class SpikeMlp(Module):
    def __init__(self, dim: int, hidden: int, neuron: MultiSpikeNeuron, rng: np.random.Generator):
        super().__init__()
        self.neuron = neuron
        self.fc1 = Linear(dim, hidden, rng, bias=False)
        self.norm1 = BatchNorm(hidden)
        self.fc2 = Linear(hidden, dim, rng, bias=False)
        self.norm2 = BatchNorm(dim)

    def forward(self, x: Tensor, relaxed: bool = False) -> Tensor:
        h = self.norm1(self.fc1(self.neuron(x, relaxed=relaxed)))
        return self.norm2(self.fc2(self.neuron(h, relaxed=relaxed)))


class SpikeBlock(Module):
    def __init__(self, cfg: BackboneConfig, rng: np.random.Generator):
        super().__init__()
        neuron = cfg.neuron()
        self.attn = SpikeAttention(cfg.embed_dim, cfg.heads, neuron, rng)
        self.mlp = SpikeMlp(cfg.embed_dim, int(cfg.embed_dim * cfg.mlp_ratio), neuron, rng)

    def forward(self, x: Tensor, relaxed: bool = False) -> Tensor:
        x = ops.add(x, self.attn(x, relaxed=relaxed))
        x = ops.add(x, self.mlp(x, relaxed=relaxed))
        return x


class SpikingBackbone(Module):
    """Patch embedding, positional/type embeddings, and spiking blocks."""

    def __init__(self, cfg: BackboneConfig, rng: np.random.Generator):
        super().__init__()
        self.cfg = cfg
        d = cfg.embed_dim
        self.patch_embed = Conv2d(3, d, cfg.stride, rng, stride=cfg.stride, pad=0)
        self.embed_norm = BatchNorm(d)
        self.pos_table = Tensor(
            rng.normal(0.0, 0.02, (cfg.num_tokens, d)), requires_grad=True
        )
        self.type_table = Tensor(rng.normal(0.0, 0.02, (3, d)), requires_grad=True)
        self.blocks = ModuleList(SpikeBlock(cfg, rng) for _ in range(cfg.num_blocks))
        self.final_norm = BatchNorm(d)

    def forward(
        self, images: np.ndarray, layout: str, relaxed: bool = False
    ) -> tuple[Tensor, dict[str, float]]:
        """Batch of fused images (B, H, W, 3) -> token features (B, N, D).

        All images in the batch must share one layout. Returns the features
        and the per-layer mean input firing rate of every spiking contraction.
        """
        imgs = np.asarray(images, dtype=np.float64)
        if imgs.ndim != 4 or imgs.shape[-1] != 3:
            raise AutodiffError(f"backbone: expected (B, H, W, 3) images, got {imgs.shape}")
        tokens = self.patch_embed(Tensor(imgs))  # (B, gh, gw, D)
        b, gh, gw, d = tokens.shape
        tokens = ops.reshape(tokens, (b, gh * gw, d))
        tl = token_layout(layout, self.cfg.stride, self.cfg.template_size, self.cfg.search_size)
        if tl.grid_shape != (gh, gw):
            raise AutodiffError(
                f"backbone: image grid {(gh, gw)} does not match layout {layout!r} "
                f"grid {tl.grid_shape}"
            )
        features = self.forward_tokens(tokens, tl.pos_ids, tl.type_ids, relaxed=relaxed)
        return features, self.firing_stats()

    def forward_tokens(
        self,
        tokens: Tensor,
        pos_ids: np.ndarray,
        type_ids: np.ndarray,
        relaxed: bool = False,
    ) -> Tensor:
        x = self.embed_norm(tokens)
        x = add_embeddings(x, self.pos_table, pos_ids, self.type_table, type_ids)
        for block in self.blocks:
            x = block(x, relaxed=relaxed)
        return self.final_norm(x)

    def firing_stats(self) -> dict[str, float]:
        return {
            e.name: e.input_rate for e in self.energy_entries() if e.is_spiking
        }

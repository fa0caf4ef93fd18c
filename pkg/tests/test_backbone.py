"""Backbone: firing stats, determinism, equivariance, spiking type audit."""

import numpy as np
import pytest

from spiketrack.autodiff import Tensor, no_grad, ops
from spiketrack.nn.backbone import (
    BackboneConfig,
    SpikingBackbone,
    add_embeddings,
    token_layout,
)
from spiketrack.nn.neuron import SpikeTensor, collect_spikes
from spiketrack.nn.patch import HORIZONTAL, VERTICAL, random_patch_fuse


@pytest.fixture
def small_cfg():
    return BackboneConfig(embed_dim=16, num_blocks=1, stride=16, t_max=4, heads=2)


@pytest.fixture
def fused_batch(rng):
    j = random_patch_fuse(
        rng.random((128, 128, 3)),
        rng.random((128, 128, 3)),
        rng.random((256, 256, 3)),
        rng_seed=0,
        mode="infer",
    )
    return np.stack([j.fused, j.fused * 0.5])


class TestTokenLayout:
    def test_counts(self):
        tl = token_layout(HORIZONTAL, 16)
        assert len(tl.type_ids) == 384
        assert len(tl.t1_idx) == 64
        assert len(tl.t2_idx) == 64
        assert len(tl.search_idx) == 256
        assert tl.map_side == 16

    def test_pos_ids_are_a_permutation(self):
        for layout in (HORIZONTAL, VERTICAL):
            tl = token_layout(layout, 16)
            assert sorted(tl.pos_ids) == list(range(384))

    def test_search_tokens_row_major(self):
        tl = token_layout(HORIZONTAL, 16)
        # first search token: grid row 0, column 8 (right of the templates)
        assert tl.search_idx[0] == 8
        assert tl.search_idx[1] == 9
        # second map row starts one full grid row later
        assert tl.search_idx[16] == 24 + 8

    def test_region_local_positions_shared_across_layouts(self):
        h = token_layout(HORIZONTAL, 16)
        v = token_layout(VERTICAL, 16)
        # search token k has the same positional row in both layouts
        assert np.array_equal(h.pos_ids[h.search_idx], v.pos_ids[v.search_idx])


class TestBackboneForward:
    def test_shapes_and_rate_range(self, small_cfg, fused_batch, rng):
        net = SpikingBackbone(small_cfg, rng)
        feats, stats = net.forward(fused_batch, HORIZONTAL)
        assert feats.shape == (2, 384, 16)
        assert stats
        assert all(0.0 <= r <= 1.0 for r in stats.values())

    def test_zero_input_zero_rates(self, small_cfg, rng):
        net = SpikingBackbone(small_cfg, rng)
        zeros = np.zeros((2, 256, 384, 3))
        _, stats = net.forward(zeros, HORIZONTAL)
        assert all(rate == 0.0 for rate in stats.values())

    def test_deterministic_across_instances(self, small_cfg, fused_batch):
        a = SpikingBackbone(small_cfg, np.random.default_rng(42))
        b = SpikingBackbone(small_cfg, np.random.default_rng(42))
        fa, _ = a.forward(fused_batch, HORIZONTAL)
        fb, _ = b.forward(fused_batch, HORIZONTAL)
        assert np.array_equal(fa.data, fb.data)

    def test_spiking_activations_are_spike_tensors(self, small_cfg, fused_batch, rng):
        """Type audit: inter-layer activations in spiking blocks are integer
        counts bounded by t_max; continuous values appear only as membranes."""
        net = SpikingBackbone(small_cfg, rng)
        with collect_spikes() as seen:
            net.forward(fused_batch, HORIZONTAL)
        # input spike + q/k/v + attention + 2 mlp spikes per block
        assert len(seen) == 7 * small_cfg.num_blocks
        for s in seen:
            assert isinstance(s, SpikeTensor)
            s.check_invariants()
            assert s.t_max == small_cfg.t_max

    def test_permutation_equivariance(self, small_cfg, rng):
        """Permuting tokens together with their embedding rows permutes the
        output identically."""
        net = SpikingBackbone(small_cfg, rng)
        net.eval()  # running stats avoid batch-coupling noise in the audit
        tl = token_layout(HORIZONTAL, 16)
        tokens = rng.normal(size=(2, 384, 16))
        perm = rng.permutation(384)
        with no_grad():
            base = net.forward_tokens(Tensor(tokens), tl.pos_ids, tl.type_ids)
            permuted = net.forward_tokens(
                Tensor(tokens[:, perm]), tl.pos_ids[perm], tl.type_ids[perm]
            )
        np.testing.assert_allclose(permuted.data, base.data[:, perm], atol=1e-10)

    def test_grid_layout_mismatch_rejected(self, small_cfg, fused_batch, rng):
        net = SpikingBackbone(small_cfg, rng)
        from spiketrack.autodiff import AutodiffError

        with pytest.raises(AutodiffError, match="grid"):
            net.forward(fused_batch, VERTICAL)


class TestAddEmbeddings:
    def test_zero_everything_zero_output(self):
        tokens = Tensor(np.zeros((4, 3)))
        pos = Tensor(np.zeros((4, 3)))
        typ = Tensor(np.zeros((3, 3)))
        out = add_embeddings(tokens, pos, np.arange(4), typ, np.zeros(4, dtype=int))
        assert not out.data.any()

    def test_zero_tokens_sum_of_rows(self, rng):
        pos = rng.normal(size=(4, 3))
        typ = rng.normal(size=(3, 3))
        tokens = Tensor(np.zeros((4, 3)))
        out = add_embeddings(
            tokens, Tensor(pos), np.array([2, 0, 1, 3]), Tensor(typ), np.array([0, 2, 1, 0])
        )
        np.testing.assert_allclose(out.data, pos[[2, 0, 1, 3]] + typ[[0, 2, 1, 0]], atol=1e-15)

    def test_count_mismatch_rejected(self):
        from spiketrack.autodiff import AutodiffError

        with pytest.raises(AutodiffError, match="tokens"):
            add_embeddings(
                Tensor(np.zeros((4, 3))),
                Tensor(np.zeros((4, 3))),
                np.arange(3),
                Tensor(np.zeros((3, 3))),
                np.zeros(4, dtype=int),
            )

"""Random patch fusion: layouts, determinism, exact invertibility."""

import numpy as np
import pytest

from spiketrack.nn.patch import (
    HORIZONTAL,
    SEARCH,
    TEMPLATE1,
    TEMPLATE2,
    VERTICAL,
    PatchError,
    random_patch_fuse,
    unfuse,
)


@pytest.fixture
def images(rng):
    return (
        rng.random((128, 128, 3)),
        rng.random((128, 128, 3)),
        rng.random((256, 256, 3)),
    )


class TestFuse:
    def test_infer_mode_always_horizontal(self, images):
        for seed in range(20):
            j = random_patch_fuse(*images, rng_seed=seed, mode="infer")
            assert j.layout == HORIZONTAL
            assert j.fused.shape == (256, 384, 3)

    def test_vertical_shape(self, images):
        for seed in range(50):
            j = random_patch_fuse(*images, rng_seed=seed, mode="train")
            if j.layout == VERTICAL:
                assert j.fused.shape == (384, 256, 3)
                return
        pytest.fail("no vertical layout in 50 seeds")

    def test_layout_frequencies_balanced(self, images):
        """Seeds 0..999: each layout drawn between 45% and 55% of the time."""
        layouts = [
            random_patch_fuse(*images, rng_seed=s, mode="train").layout for s in range(1000)
        ]
        frac_h = layouts.count(HORIZONTAL) / 1000.0
        assert 0.45 <= frac_h <= 0.55

    def test_same_seed_same_layout(self, images):
        a = random_patch_fuse(*images, rng_seed=77, mode="train")
        b = random_patch_fuse(*images, rng_seed=77, mode="train")
        assert a.layout == b.layout

    def test_zero_inputs_zero_output(self):
        z128 = np.zeros((128, 128, 3))
        z256 = np.zeros((256, 256, 3))
        j = random_patch_fuse(z128, z128, z256, rng_seed=0, mode="train")
        assert not j.fused.any()

    def test_wrong_sizes_rejected(self, rng):
        bad = rng.random((64, 64, 3))
        ok256 = rng.random((256, 256, 3))
        ok128 = rng.random((128, 128, 3))
        with pytest.raises(PatchError, match="template1"):
            random_patch_fuse(bad, ok128, ok256, 0)
        with pytest.raises(PatchError, match="search"):
            random_patch_fuse(ok128, ok128, rng.random((128, 128, 3)), 0)

    def test_out_of_range_pixels_rejected(self, rng):
        t = rng.random((128, 128, 3)) + 2.0
        with pytest.raises(PatchError, match=r"\[0, 1\]"):
            random_patch_fuse(t, rng.random((128, 128, 3)), rng.random((256, 256, 3)), 0)

    def test_unknown_mode_rejected(self, images):
        with pytest.raises(PatchError, match="mode"):
            random_patch_fuse(*images, rng_seed=0, mode="test")


class TestUnfuse:
    @pytest.mark.parametrize("mode_seed", [0, 1, 2, 3])
    def test_bijective_rearrangement(self, images, mode_seed):
        """unfuse recovers the three source images bit-identically."""
        t1, t2, x = images
        j = random_patch_fuse(t1, t2, x, rng_seed=mode_seed, mode="train")
        r1, r2, rx = unfuse(j)
        assert np.array_equal(r1, t1)
        assert np.array_equal(r2, t2)
        assert np.array_equal(rx, x)


class TestTokenTypes:
    def test_every_patch_has_one_type(self, images):
        j = random_patch_fuse(*images, rng_seed=0, mode="infer")
        grid = j.token_types(16)
        assert grid.shape == (16, 24)
        assert set(np.unique(grid)) == {TEMPLATE1, TEMPLATE2, SEARCH}
        # horizontal: left 8 columns split top/bottom between templates
        assert (grid[:8, :8] == TEMPLATE1).all()
        assert (grid[8:, :8] == TEMPLATE2).all()
        assert (grid[:, 8:] == SEARCH).all()
        assert (grid == SEARCH).sum() == 256

    def test_vertical_grid(self, images):
        for seed in range(50):
            j = random_patch_fuse(*images, rng_seed=seed, mode="train")
            if j.layout == VERTICAL:
                grid = j.token_types(16)
                assert grid.shape == (24, 16)
                assert (grid[:8, :8] == TEMPLATE1).all()
                assert (grid[:8, 8:] == TEMPLATE2).all()
                assert (grid[8:, :] == SEARCH).all()
                return

    def test_indivisible_stride_rejected(self, images):
        j = random_patch_fuse(*images, rng_seed=0, mode="infer")
        with pytest.raises(PatchError, match="stride"):
            j.token_types(48)

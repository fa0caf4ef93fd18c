"""JSD mutual-information estimator, shuffling, pooling, and the MI loss."""

import numpy as np
import pytest

from spiketrack.autodiff import AutodiffError, Tensor, ops
from spiketrack.mi.estimator import (
    ZERO_SCORER_VALUE,
    jsd_mi_estimate,
    mi_loss,
    pool_template_features,
    shuffle_batch,
)
from spiketrack.mi.statnet import MlpStatisticsNetwork, TemplateStatisticsNetwork
from spiketrack.nn.backbone import token_layout
from spiketrack.nn.patch import HORIZONTAL


class _ConstantScorer:
    def __init__(self, value):
        self.value = value

    def score(self, z, t):
        return Tensor(np.full(z.shape[0], self.value))


class _FixedScorer:
    """Returns queued score vectors in call order (joint first, then marginal)."""

    def __init__(self, *vectors):
        self.vectors = list(vectors)

    def score(self, z, t):
        return Tensor(np.asarray(self.vectors.pop(0), dtype=np.float64))


class TestShuffle:
    def test_b2_forced_swap(self, rng):
        z = Tensor(rng.normal(size=(2, 3)))
        sh = shuffle_batch(z, rng_seed=0)
        np.testing.assert_array_equal(sh.permutation, [1, 0])

    def test_rows_are_exact_copies(self, rng):
        z = rng.normal(size=(4, 5))
        sh = shuffle_batch(Tensor(z), rng_seed=9)
        assert np.array_equal(sh.z_prime.data, z[sh.permutation])
        assert sorted(map(tuple, sh.z_prime.data.tolist())) == sorted(map(tuple, z.tolist()))

    def test_never_a_fixed_point(self, rng):
        z = Tensor(rng.normal(size=(5, 2)))
        for seed in range(300):
            sh = shuffle_batch(z, rng_seed=seed)
            assert not np.any(sh.permutation == np.arange(5))

    def test_batch_of_one_rejected(self):
        with pytest.raises(AutodiffError, match="batch size 1"):
            shuffle_batch(Tensor(np.zeros((1, 3))), rng_seed=0)

    def test_b3_derangements_uniform(self):
        """The two derangements of three items appear 50/50 over 10^4 seeds."""
        z = Tensor(np.zeros((3, 1)))
        counts = {(1, 2, 0): 0, (2, 0, 1): 0}
        n = 10_000
        for seed in range(n):
            perm = tuple(shuffle_batch(z, rng_seed=seed).permutation.tolist())
            counts[perm] += 1
        assert counts[(1, 2, 0)] + counts[(2, 0, 1)] == n
        assert abs(counts[(1, 2, 0)] / n - 0.5) <= 0.03


class TestEstimator:
    def test_zero_scorer_is_minus_two_ln_two(self, rng):
        z = Tensor(rng.normal(size=(8, 3)))
        t = Tensor(rng.normal(size=(8, 2)))
        sh = shuffle_batch(z, rng_seed=1)
        est = jsd_mi_estimate(z, sh, t, _ConstantScorer(0.0))
        assert est.item() == pytest.approx(ZERO_SCORER_VALUE, abs=1e-12)
        assert est.item() == pytest.approx(-2.0 * np.log(2.0), abs=1e-12)

    def test_worked_two_sample_example(self):
        """Joint scores [1, -1], marginal scores [0, 2]."""
        z = Tensor(np.zeros((2, 1)))
        t = Tensor(np.zeros((2, 1)))
        sh = shuffle_batch(z, rng_seed=0)
        scorer = _FixedScorer([1.0, -1.0], [0.0, 2.0])
        est = jsd_mi_estimate(z, sh, t, scorer)
        sp = lambda v: np.logaddexp(0.0, v)
        expected = (-sp(-1.0) - sp(1.0)) / 2.0 - (sp(0.0) + sp(2.0)) / 2.0
        assert est.item() == pytest.approx(expected, abs=1e-12)
        assert est.item() == pytest.approx(-2.223300, abs=1e-6)

    def test_estimate_never_positive(self, rng):
        statnet = MlpStatisticsNetwork(z_dim=4, t_dim=3, hidden=6, rng=rng)
        for trial in range(200):
            b = int(rng.integers(2, 9))
            z = Tensor(rng.normal(size=(b, 4)) * 3)
            t = Tensor(rng.normal(size=(b, 3)) * 3)
            sh = shuffle_batch(z, rng_seed=trial)
            assert jsd_mi_estimate(z, sh, t, statnet).item() <= 0.0

    def test_batch_mismatch_rejected(self, rng):
        z = Tensor(rng.normal(size=(4, 2)))
        sh = shuffle_batch(z, rng_seed=0)
        t = Tensor(rng.normal(size=(3, 2)))
        with pytest.raises(AutodiffError, match="batch"):
            jsd_mi_estimate(z, sh, t, _ConstantScorer(0.0))


class TestMiLoss:
    def test_zero_weight_zero_loss(self):
        est = Tensor(-1.3)
        assert mi_loss(est, 0.0).item() == 0.0

    def test_worked_value(self):
        est = Tensor(-2.0 * np.log(2.0))
        assert mi_loss(est, 0.1).item() == pytest.approx(0.1386294361, abs=1e-9)

    def test_nonnegative_for_valid_inputs(self, rng):
        for _ in range(50):
            est = Tensor(-float(rng.uniform(0, 5)))
            lam = float(rng.uniform(0, 1))
            assert mi_loss(est, lam).item() >= 0.0

    def test_negative_lambda_rejected(self):
        with pytest.raises(AutodiffError, match="lambda"):
            mi_loss(Tensor(-1.0), -0.2)


class TestPooling:
    def test_single_token_identity(self, rng):
        tl = token_layout(HORIZONTAL, 16)
        feats = rng.normal(size=(2, 384, 4))
        pooled = pool_template_features(Tensor(feats), tl, "template1")
        np.testing.assert_allclose(pooled.data, feats[:, tl.t1_idx].mean(axis=1), atol=1e-12)

    def test_two_token_mean(self):
        tl = token_layout(HORIZONTAL, 4, template_size=4, search_size=8)
        # template1 is a single token at this scale; use both templates
        feats = np.zeros((1, len(tl.type_ids), 2))
        feats[0, tl.t1_idx[0]] = [2.0, 4.0]
        feats[0, tl.t2_idx[0]] = [4.0, 8.0]
        pooled = pool_template_features(Tensor(feats), tl, "both")
        np.testing.assert_allclose(pooled.data[0], [3.0, 6.0], atol=1e-15)

    def test_unknown_selector_rejected(self, rng):
        tl = token_layout(HORIZONTAL, 16)
        with pytest.raises(AutodiffError, match="selector"):
            pool_template_features(Tensor(rng.normal(size=(1, 384, 2))), tl, "nope")


class TestLearnability:
    def test_correlated_beats_independent(self, rng):
        """Training only the scorer orders dependence correctly (toy MI)."""
        wins = 0
        for seed in range(5):
            gap = _trained_gap(seed)
            wins += gap > 0.1
        assert wins >= 4, f"only {wins}/5 seeds ordered the estimates"


def _trained_gap(seed: int) -> float:
    from spiketrack.autodiff import Tape, backward
    from spiketrack.training import AdamW

    def estimate_for(rho: float) -> float:
        rng = np.random.default_rng(seed * 101 + int(rho * 10))
        statnet = MlpStatisticsNetwork(z_dim=1, t_dim=1, hidden=16, rng=rng)
        opt = AdamW(statnet.named_parameters(), lr=5e-3, weight_decay=0.0)
        final = 0.0
        for step in range(250):
            z_raw = rng.normal(size=(64, 1))
            noise = rng.normal(size=(64, 1))
            t_raw = rho * z_raw + np.sqrt(1 - rho**2) * noise
            z = Tensor(z_raw)
            t = Tensor(t_raw)
            with Tape():
                sh = shuffle_batch(z, rng_seed=step)
                est = jsd_mi_estimate(z, sh, t, statnet)
                opt.zero_grad()
                backward(ops.neg(est))  # ascend the bound
            opt.step()
            final = est.item()
        return final

    return estimate_for(0.9) - estimate_for(0.0)

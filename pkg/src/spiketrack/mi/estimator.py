"""Jensen-Shannon mutual-information estimation between inputs and features.

The bound scores joint pairs (z_i, t_i) against shuffled pairs (z'_i, t_i):

    estimate = mean_i[-sp(-T(z_i, t_i))] - mean_i[sp(T(z'_i, t_i))]

which is <= 0 for every scorer T, with -2 ln 2 at T == 0. The shuffle is a
derangement so no joint pair leaks into the marginal term at small batch.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..autodiff import ops
from ..autodiff.tensor import AutodiffError, Tensor
from ..nn.backbone import TokenLayout

ZERO_SCORER_VALUE = -2.0 * np.log(2.0)


@dataclass
class ShuffledBatch:
    """Row-permuted copy of a sample batch plus the permutation that made it."""

    z_prime: Tensor
    permutation: np.ndarray


def shuffle_batch(z: Tensor, rng_seed: int, max_resamples: int = 1000) -> ShuffledBatch:
    """Uniform derangement of the batch rows (resampled until no fixed point)."""
    b = z.shape[0]
    if b < 2:
        raise AutodiffError(f"shuffle_batch: batch size {b} < 2 cannot decorrelate")
    rng = np.random.default_rng(rng_seed)
    for _ in range(max_resamples):
        perm = rng.permutation(b)
        if not np.any(perm == np.arange(b)):
            return ShuffledBatch(z_prime=ops.index_rows(z, perm), permutation=perm)
    raise AutodiffError("shuffle_batch: no derangement found (rng exhausted)")


def jsd_mi_estimate(z: Tensor, shuffled: ShuffledBatch, t_z: Tensor, statnet) -> Tensor:
    """Empirical Jensen-Shannon MI bound; scalar tensor, always <= 0."""
    b = z.shape[0]
    if shuffled.z_prime.shape != z.shape:
        raise AutodiffError(
            f"jsd_mi_estimate: shuffled shape {shuffled.z_prime.shape} != {z.shape}"
        )
    if t_z.shape[0] != b:
        raise AutodiffError(f"jsd_mi_estimate: feature batch {t_z.shape[0]} != {b}")
    joint = statnet.score(z, t_z)
    marginal = statnet.score(shuffled.z_prime, t_z)
    joint_term = ops.mean(ops.neg(ops.softplus(ops.neg(joint))))
    marginal_term = ops.mean(ops.softplus(marginal))
    return ops.sub(joint_term, marginal_term)


def mi_loss(estimate: Tensor, lambda_mi: float) -> Tensor:
    """-lambda_mi * estimate; the adaptive weight must be non-negative."""
    if lambda_mi < 0:
        raise AutodiffError(f"mi_loss: lambda_mi must be >= 0, got {lambda_mi}")
    return ops.mul(estimate, Tensor(-float(lambda_mi)))


def pool_template_features(
    features: Tensor, layout: TokenLayout, which: str = "both"
) -> Tensor:
    """Mean-pool token features over template tokens, per sample.

    features: (B, N, D). which selects template1, template2, or both.
    """
    if which == "both":
        idx = np.concatenate([layout.t1_idx, layout.t2_idx])
    elif which == "template1":
        idx = layout.t1_idx
    elif which == "template2":
        idx = layout.t2_idx
    else:
        raise AutodiffError(f"pool_template_features: unknown selector {which!r}")
    if idx.size == 0:
        raise AutodiffError("pool_template_features: no template tokens in layout")
    b, n, d = features.shape
    flat = ops.reshape(features, (b * n, d))
    offsets = (np.arange(b) * n)[:, None] + idx[None, :]
    rows = ops.index_rows(flat, offsets.reshape(-1), assume_unique=True)
    rows = ops.reshape(rows, (b, idx.size, d))
    return ops.mean(rows, axis=1)

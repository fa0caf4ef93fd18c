"""Statistics networks scoring (input, feature) pairs for the MI estimator.

The same parameters score joint and shuffled pairs; the scalar score feeds
the Jensen-Shannon bound. Two variants: a conv/MLP two-branch network for
raw template pixels, and a plain MLP one for vector pairs (toy problems,
gradient checks).
"""

from __future__ import annotations

import numpy as np

from ..autodiff import ops
from ..autodiff.tensor import AutodiffError, Tensor
from ..nn.layers import Conv2d, Linear, Module


class MlpStatisticsNetwork(Module):
    """Two-branch perceptron scorer for (vector, vector) pairs."""

    def __init__(self, z_dim: int, t_dim: int, hidden: int, rng: np.random.Generator):
        super().__init__()
        self.z_dim = z_dim
        self.t_dim = t_dim
        self.enc_z = Linear(z_dim, hidden, rng)
        self.enc_t = Linear(t_dim, hidden, rng)
        self.head1 = Linear(2 * hidden, hidden, rng)
        self.head2 = Linear(hidden, 1, rng)

    def score(self, z: Tensor, t: Tensor) -> Tensor:
        if z.shape[0] != t.shape[0]:
            raise AutodiffError(
                f"statistics network: batch mismatch {z.shape[0]} vs {t.shape[0]}"
            )
        hz = ops.relu(self.enc_z(z))
        ht = ops.relu(self.enc_t(t))
        h = ops.relu(self.head1(ops.concat([hz, ht], axis=1)))
        return ops.reshape(self.head2(h), (z.shape[0],))

    forward = score


class TemplateStatisticsNetwork(Module):
    """Strided conv encoder for raw template pixels, MLP for pooled features.

    z arrives flattened as (B, side * side * channels) in channel-last pixel
    order; channels is 6 when both templates are scored, 3 for one.
    """

    def __init__(
        self,
        feature_dim: int,
        rng: np.random.Generator,
        side: int = 128,
        channels: int = 6,
        hidden: int = 32,
    ):
        super().__init__()
        self.side = side
        self.channels = channels
        self.feature_dim = feature_dim
        self.hidden = hidden
        # no normalization: the same fixed function must score joint and
        # shuffled pairs comparably within one step
        self.conv1 = Conv2d(channels, 8, 16, rng, stride=16)
        self.conv2 = Conv2d(8, hidden, side // 16, rng, stride=side // 16)
        self.enc_t = Linear(feature_dim, hidden, rng)
        self.head1 = Linear(2 * hidden, hidden, rng)
        self.head2 = Linear(hidden, 1, rng)

    def score(self, z: Tensor, t: Tensor) -> Tensor:
        b = z.shape[0]
        if t.shape[0] != b:
            raise AutodiffError(f"statistics network: batch mismatch {b} vs {t.shape[0]}")
        expected = self.channels * self.side * self.side
        if z.shape[1] != expected:
            raise AutodiffError(
                f"statistics network: flat pixel dim {z.shape[1]} != {expected}"
            )
        img = ops.reshape(z, (b, self.side, self.side, self.channels))
        h = ops.relu(self.conv1(img))
        h = ops.reshape(self.conv2(h), (b, self.hidden))
        hz = ops.relu(h)
        ht = ops.relu(self.enc_t(t))
        h = ops.relu(self.head1(ops.concat([hz, ht], axis=1)))
        return ops.reshape(self.head2(h), (b,))

    forward = score

"""Gradient verification suite over every differentiable path in the stack.

Finite differences probe smooth paths directly; spiking paths run in their
continuous relaxation (whose exact derivative is the window surrogate), and
the integer path's backward is swept against the surrogate closed form.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tape, Tensor, backward, gradcheck, ops
from .head import (
    CenterHead,
    HeadBranch,
    focal_loss,
    giou_loss,
    l1_box_loss,
    make_cls_target,
    similarity_loss,
)
from .mi.estimator import jsd_mi_estimate, mi_loss, pool_template_features, shuffle_batch
from .mi.statnet import MlpStatisticsNetwork, TemplateStatisticsNetwork
from .nn.backbone import BackboneConfig, SpikingBackbone, add_embeddings, token_layout
from .nn.layers import BatchNorm
from .nn.neuron import MultiSpikeNeuron
from .nn.patch import HORIZONTAL


@dataclass
class CheckResult:
    name: str
    max_err: float
    tol: float

    @property
    def passed(self) -> bool:
        return self.max_err < self.tol

    def __str__(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] {self.name}: max err {self.max_err:.3e} (tol {self.tol:.1e})"


def _rand(rng, *shape, lo=-1.0, hi=1.0, away=0.0):
    """Uniform values, optionally pushed away from zero (kink safety)."""
    x = rng.uniform(lo, hi, shape)
    if away:
        x = np.where(np.abs(x) < away, np.sign(x) * away + x, x)
    return x


def _check(name, f, tensors, tol=1e-4, sample=None, seed=0):
    report = gradcheck(f, tensors, tol=tol, max_elements_per_input=sample, sample_seed=seed)
    return CheckResult(name=name, max_err=report.max_rel_err, tol=tol)


def _primitive_checks(rng) -> list[CheckResult]:
    results = []
    a = Tensor(_rand(rng, 3, 4), requires_grad=True)
    b = Tensor(_rand(rng, 3, 4, away=0.2), requires_grad=True)
    row = Tensor(_rand(rng, 4), requires_grad=True)

    smooth = lambda t: ops.mean(ops.tanh(t))
    results.append(_check("add_broadcast", lambda a, row: smooth(ops.add(a, row)), [a, row]))
    results.append(_check("sub", lambda a, b: smooth(ops.sub(a, b)), [a, b]))
    results.append(_check("mul", lambda a, b: smooth(ops.mul(a, b)), [a, b]))
    results.append(_check("div", lambda a, b: smooth(ops.div(a, b)), [a, b]))
    results.append(_check("neg", lambda a: smooth(ops.neg(a)), [a]))
    results.append(_check("pow_scalar", lambda b: smooth(ops.pow_scalar(ops.absolute(b), 1.7)), [b]))
    results.append(_check("maximum", lambda a, b: smooth(ops.maximum(a, b)), [a, b]))
    results.append(_check("minimum", lambda a, b: smooth(ops.minimum(a, b)), [a, b]))
    results.append(_check("relu", lambda b: smooth(ops.relu(b)), [b]))
    results.append(_check("clamp_min", lambda b: smooth(ops.clamp_min(b, 0.0)), [b]))
    results.append(_check("abs", lambda b: smooth(ops.absolute(b)), [b]))
    results.append(_check("exp", lambda a: smooth(ops.exp(a)), [a]))
    pos = Tensor(rng.uniform(0.5, 2.0, (3, 4)), requires_grad=True)
    results.append(_check("log", lambda pos: smooth(ops.log(pos)), [pos]))
    results.append(_check("sqrt", lambda pos: smooth(ops.sqrt(pos)), [pos]))
    results.append(_check("tanh", lambda a: smooth(ops.tanh(a)), [a]))
    results.append(_check("sigmoid", lambda a: smooth(ops.sigmoid(a)), [a]))
    results.append(_check("softplus", lambda a: smooth(ops.softplus(a)), [a]))
    results.append(_check("sum_axis", lambda a: ops.mean(ops.tanh(ops.sum_(a, axis=0))), [a]))
    results.append(_check("mean_axis", lambda a: ops.mean(ops.tanh(ops.mean(a, axis=1))), [a]))
    results.append(_check("reshape_permute", lambda a: smooth(ops.permute(ops.reshape(a, (4, 3)), (1, 0))), [a]))
    results.append(
        _check("concat_slice", lambda a, b: smooth(ops.slice_axis(ops.concat([a, b], axis=1), 1, 2, 6)), [a, b])
    )
    idx = np.array([2, 0, 1, 2])
    results.append(_check("index_rows", lambda a: smooth(ops.index_rows(a, idx)), [a]))

    m1 = Tensor(_rand(rng, 3, 5), requires_grad=True)
    m2 = Tensor(_rand(rng, 5, 2), requires_grad=True)
    results.append(_check("matmul_2d", lambda m1, m2: smooth(ops.matmul(m1, m2)), [m1, m2]))
    b1 = Tensor(_rand(rng, 2, 3, 4), requires_grad=True)
    b2 = Tensor(_rand(rng, 2, 4, 2), requires_grad=True)
    results.append(_check("matmul_batched", lambda b1, b2: smooth(ops.matmul(b1, b2)), [b1, b2]))

    x = Tensor(_rand(rng, 2, 4, 4, 2), requires_grad=True)
    w = Tensor(_rand(rng, 3, 2, 3, 3) * 0.4, requires_grad=True)
    bias = Tensor(_rand(rng, 3), requires_grad=True)
    results.append(
        _check("conv2d_stride1", lambda x, w, bias: smooth(ops.conv2d(x, w, bias, stride=1, pad=1)), [x, w, bias])
    )
    wp = Tensor(_rand(rng, 3, 2, 2, 2) * 0.4, requires_grad=True)
    results.append(
        _check("conv2d_patchify", lambda x, wp: smooth(ops.conv2d(x, wp, stride=2)), [x, wp])
    )

    xb = Tensor(_rand(rng, 6, 5), requires_grad=True)
    gamma = Tensor(rng.uniform(0.5, 1.5, 5), requires_grad=True)
    beta = Tensor(_rand(rng, 5), requires_grad=True)

    def bn_train(xb, gamma, beta):
        y, _, _ = ops.batch_norm(xb, gamma, beta, channel_axis=-1)
        return smooth(y)

    results.append(_check("batch_norm_train", bn_train, [xb, gamma, beta]))
    rm, rv = rng.normal(size=5) * 0.1, rng.uniform(0.5, 1.5, 5)
    results.append(
        _check(
            "batch_norm_inference",
            lambda xb, gamma, beta: smooth(
                ops.batch_norm_inference(xb, gamma, beta, rm, rv, channel_axis=-1)
            ),
            [xb, gamma, beta],
        )
    )
    return results


def _surrogate_sweep_checks() -> list[CheckResult]:
    """Integer spike backward must equal the surrogate closed form exactly."""
    results = []
    for name, kwargs in (
        ("window", dict(surrogate="window")),
        ("arctan", dict(surrogate="arctan", surrogate_width=2.0)),
    ):
        neuron = MultiSpikeNeuron(threshold=0.8, t_max=4, **kwargs)
        m = np.linspace(-2.0, 5.0, 701)
        with Tape():
            mem = Tensor(m, requires_grad=True)
            out = neuron(mem)
            backward(ops.sum_(out))
        expected = neuron.surrogate_derivative(m)
        err = float(np.max(np.abs(mem.grad - expected)))
        results.append(CheckResult(f"spike_surrogate_{name}", err, 1e-10))
    return results


def _spiking_path_checks(rng) -> list[CheckResult]:
    """Relaxed-mode spiking nets: FD probes the surrogate-defined gradient."""
    results = []
    neuron = MultiSpikeNeuron(threshold=1.0, t_max=4)

    branch = HeadBranch(4, 3, 2, neuron, rng)
    branch.train()
    xmap = Tensor(_rand(rng, 2, 3, 3, 4), requires_grad=True)
    params = list(branch.named_parameters().values())

    def branch_loss(*_):
        return ops.mean(ops.mul(branch(xmap, relaxed=True), Tensor(3.0)))

    results.append(
        _check("head_branch_relaxed", branch_loss, [xmap] + params, sample=25, seed=1)
    )

    cfg = BackboneConfig(
        embed_dim=8,
        num_blocks=1,
        stride=4,
        t_max=4,
        heads=2,
        mlp_ratio=1.0,
        template_size=8,
        search_size=16,
    )
    net = SpikingBackbone(cfg, rng)
    net.train()
    tl = token_layout(HORIZONTAL, 4, 8, 16)
    imgs = rng.uniform(0.0, 1.0, (2, 16, 24, 3))
    nparams = list(net.named_parameters().values())

    def backbone_loss(*_):
        feats, _ = net.forward(imgs, HORIZONTAL, relaxed=True)
        return ops.mean(ops.tanh(feats))

    results.append(
        _check("backbone_relaxed", backbone_loss, nparams, sample=20, seed=2)
    )
    del tl
    return results


def _amim_checks(rng) -> list[CheckResult]:
    results = []
    statnet = MlpStatisticsNetwork(z_dim=3, t_dim=2, hidden=4, rng=rng)
    z = Tensor(_rand(rng, 4, 3))
    t = Tensor(_rand(rng, 4, 2), requires_grad=True)
    shuffled = shuffle_batch(z, rng_seed=5)
    sparams = list(statnet.named_parameters().values())

    def estimate_fn(*_):
        return jsd_mi_estimate(z, shuffled, t, statnet)

    def estimate_loss(*_):
        return mi_loss(jsd_mi_estimate(z, shuffled, t, statnet), 0.37)

    results.append(_check("jsd_estimator_mlp", estimate_fn, [t] + sparams))
    results.append(_check("mi_loss_chain", estimate_loss, [t] + sparams))

    conv_net = TemplateStatisticsNetwork(feature_dim=4, rng=rng, side=32, channels=6, hidden=4)
    zc = Tensor(rng.uniform(0, 1, (3, 6 * 32 * 32)))
    tc = Tensor(_rand(rng, 3, 4), requires_grad=True)
    shuffled_c = shuffle_batch(zc, rng_seed=6)
    cparams = list(conv_net.named_parameters().values())

    def conv_estimate(*_):
        return jsd_mi_estimate(zc, shuffled_c, tc, conv_net)

    results.append(
        _check("jsd_estimator_conv", conv_estimate, [tc] + cparams, sample=25, seed=3)
    )

    feats = Tensor(_rand(rng, 2, 24, 5), requires_grad=True)
    tl = token_layout(HORIZONTAL, 4, 8, 16)

    def pool_loss(feats):
        pooled = pool_template_features(feats, tl, "both")
        return ops.mean(ops.tanh(pooled))

    results.append(_check("pool_template_features", pool_loss, [feats]))
    return results


def _loss_checks(rng) -> list[CheckResult]:
    results = []
    target = make_cls_target(5, 5, (2, 3), (2.0, 1.5))
    logits = Tensor(_rand(rng, 1, 5, 5), requires_grad=True)

    def focal(logits):
        return focal_loss(ops.sigmoid(logits), target[None])

    results.append(_check("focal_loss", focal, [logits]))

    # fractional extents keep every corner comparison away from ties (kinks)
    pred = Tensor(np.array([[10.1, 12.3, 8.2, 6.4], [3.3, 4.1, 5.2, 7.3]]), requires_grad=True)
    gt = np.array([[11.4, 10.2, 6.3, 9.1], [6.2, 2.4, 4.3, 5.2]])
    results.append(_check("giou_loss", lambda pred: giou_loss(pred, gt), [pred]))
    results.append(
        _check("l1_box_loss", lambda pred: l1_box_loss(pred, gt, 16, 16), [pred])
    )

    fa = Tensor(_rand(rng, 3, 6, away=0.1), requires_grad=True)
    fb = Tensor(_rand(rng, 3, 6, away=0.1), requires_grad=True)
    results.append(_check("similarity_loss", lambda fa, fb: similarity_loss(fa, fb), [fa, fb]))

    tokens = Tensor(_rand(rng, 2, 24, 5), requires_grad=True)
    pos = Tensor(_rand(rng, 24, 5), requires_grad=True)
    typ = Tensor(_rand(rng, 3, 5), requires_grad=True)
    tl = token_layout(HORIZONTAL, 4, 8, 16)

    def embed(tokens, pos, typ):
        return ops.mean(ops.tanh(add_embeddings(tokens, pos, tl.pos_ids, typ, tl.type_ids)))

    results.append(_check("add_embeddings", embed, [tokens, pos, typ]))
    return results


def run_gradient_suite(seed: int = 0) -> list[CheckResult]:
    """Every differentiable operation against its independent derivative oracle."""
    rng = np.random.default_rng(seed)
    results = []
    results.extend(_primitive_checks(rng))
    results.extend(_surrogate_sweep_checks())
    results.extend(_spiking_path_checks(rng))
    results.extend(_amim_checks(rng))
    results.extend(_loss_checks(rng))
    return results

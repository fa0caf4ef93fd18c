"""Differentiable primitives: values computed eagerly, one tape node per call.

All primitives validate shapes up front and raise AutodiffError naming the op
and the offending shapes. Broadcasting follows numpy rules for elementwise
ops; the backward pass sums gradients over broadcast axes.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from .tensor import (
    AutodiffError,
    Tensor,
    active_tape,
    debug_enabled,
    grad_enabled,
)


def _finish(data: np.ndarray, inputs: tuple[Tensor, ...], backward_fn, name: str) -> Tensor:
    if debug_enabled() and not np.all(np.isfinite(data)):
        raise AutodiffError(f"{name}: non-finite values in output")
    requires = grad_enabled() and any(t.requires_grad for t in inputs)
    out = Tensor(data, requires_grad=requires)
    if requires:
        active_tape().record(out, inputs, backward_fn, name)
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum grad over axes that were broadcast to reach grad.shape from shape."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def _check_broadcast(a: Tensor, b: Tensor, name: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise AutodiffError(f"{name}: shapes {a.shape} and {b.shape} do not broadcast")


def custom_op(
    data: np.ndarray,
    inputs: tuple[Tensor, ...],
    backward_fn,
    name: str,
    cls: type = Tensor,
) -> Tensor:
    """Record a caller-defined primitive (e.g. the spike nonlinearity).

    backward_fn(grad_out) must return one gradient per input, each matching
    that input's shape, or None for non-differentiable slots.
    """
    if debug_enabled() and not np.all(np.isfinite(data)):
        raise AutodiffError(f"{name}: non-finite values in output")
    requires = grad_enabled() and any(t.requires_grad for t in inputs)
    out = cls(data, requires_grad=requires)
    if requires:
        active_tape().record(out, inputs, backward_fn, name)
    return out


# ---------------------------------------------------------------------------
# elementwise arithmetic


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast(a, b, "add")

    def bwd(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _finish(a.data + b.data, (a, b), bwd, "add")


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast(a, b, "sub")

    def bwd(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _finish(a.data - b.data, (a, b), bwd, "sub")


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast(a, b, "mul")

    def bwd(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _finish(a.data * b.data, (a, b), bwd, "mul")


def div(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast(a, b, "div")

    def bwd(g):
        ga = _unbroadcast(g / b.data, a.shape)
        gb = _unbroadcast(-g * a.data / (b.data * b.data), b.shape)
        return ga, gb

    return _finish(a.data / b.data, (a, b), bwd, "div")


def neg(a: Tensor) -> Tensor:
    return _finish(-a.data, (a,), lambda g: (-g,), "neg")


def pow_scalar(a: Tensor, p: float) -> Tensor:
    p = float(p)

    def bwd(g):
        return (g * p * a.data ** (p - 1.0),)

    return _finish(a.data**p, (a,), bwd, "pow_scalar")


def maximum(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise max; on ties the gradient routes to the first argument."""
    _check_broadcast(a, b, "maximum")
    take_a = a.data >= b.data

    def bwd(g):
        return (
            _unbroadcast(np.where(take_a, g, 0.0), a.shape),
            _unbroadcast(np.where(take_a, 0.0, g), b.shape),
        )

    return _finish(np.maximum(a.data, b.data), (a, b), bwd, "maximum")


def minimum(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise min; on ties the gradient routes to the first argument."""
    _check_broadcast(a, b, "minimum")
    take_a = a.data <= b.data

    def bwd(g):
        return (
            _unbroadcast(np.where(take_a, g, 0.0), a.shape),
            _unbroadcast(np.where(take_a, 0.0, g), b.shape),
        )

    return _finish(np.minimum(a.data, b.data), (a, b), bwd, "minimum")


# ---------------------------------------------------------------------------
# elementwise nonlinearities


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0

    def bwd(g):
        return (g * mask,)

    return _finish(np.maximum(a.data, 0.0), (a,), bwd, "relu")


def clamp_min(a: Tensor, lo: float) -> Tensor:
    """max(a, lo); the gradient is zero on the clamped region (a <= lo)."""
    lo = float(lo)
    mask = a.data > lo

    def bwd(g):
        return (g * mask,)

    return _finish(np.maximum(a.data, lo), (a,), bwd, "clamp_min")


def absolute(a: Tensor) -> Tensor:
    """|a| with sign subgradient (0 at the kink)."""
    s = np.sign(a.data)

    def bwd(g):
        return (g * s,)

    return _finish(np.abs(a.data), (a,), bwd, "abs")


def exp(a: Tensor) -> Tensor:
    out_data = np.exp(a.data)

    def bwd(g):
        return (g * out_data,)

    return _finish(out_data, (a,), bwd, "exp")


def log(a: Tensor) -> Tensor:
    def bwd(g):
        return (g / a.data,)

    return _finish(np.log(a.data), (a,), bwd, "log")


def sqrt(a: Tensor) -> Tensor:
    out_data = np.sqrt(a.data)

    def bwd(g):
        return (g * 0.5 / out_data,)

    return _finish(out_data, (a,), bwd, "sqrt")


def tanh(a: Tensor) -> Tensor:
    out_data = np.tanh(a.data)

    def bwd(g):
        return (g * (1.0 - out_data * out_data),)

    return _finish(out_data, (a,), bwd, "tanh")


def sigmoid(a: Tensor) -> Tensor:
    # tanh form is stable for large |x|
    out_data = 0.5 * (1.0 + np.tanh(0.5 * a.data))

    def bwd(g):
        return (g * out_data * (1.0 - out_data),)

    return _finish(out_data, (a,), bwd, "sigmoid")


def softplus(a: Tensor) -> Tensor:
    """log(1 + e^x), computed as logaddexp(0, x) for stability."""
    out_data = np.logaddexp(0.0, a.data)

    def bwd(g):
        return (g * 0.5 * (1.0 + np.tanh(0.5 * a.data)),)

    return _finish(out_data, (a,), bwd, "softplus")


# ---------------------------------------------------------------------------
# reductions


def _restore_reduced(g: np.ndarray, shape: tuple[int, ...], axis) -> np.ndarray:
    if axis is None:
        return np.broadcast_to(g, shape).copy() if np.ndim(g) == 0 else np.full(shape, g)
    axes = (axis,) if isinstance(axis, int) else tuple(axis)
    axes = tuple(a % len(shape) for a in axes)
    expanded = np.expand_dims(g, axes)
    return np.broadcast_to(expanded, shape).copy()


def sum_(a: Tensor, axis=None) -> Tensor:
    def bwd(g):
        return (_restore_reduced(g, a.shape, axis),)

    return _finish(a.data.sum(axis=axis), (a,), bwd, "sum")


def mean(a: Tensor, axis=None) -> Tensor:
    if axis is None:
        count = a.data.size
    else:
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        count = 1
        for ax in axes:
            count *= a.shape[ax % a.ndim]

    def bwd(g):
        return (_restore_reduced(g, a.shape, axis) / count,)

    return _finish(a.data.mean(axis=axis), (a,), bwd, "mean")


# ---------------------------------------------------------------------------
# shape manipulation


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    def bwd(g):
        return (g.reshape(a.shape),)

    try:
        data = a.data.reshape(shape)
    except ValueError:
        raise AutodiffError(f"reshape: cannot view {a.shape} as {shape}")
    return _finish(data, (a,), bwd, "reshape")


def permute(a: Tensor, axes: tuple[int, ...]) -> Tensor:
    if sorted(axes) != list(range(a.ndim)):
        raise AutodiffError(f"permute: axes {axes} invalid for shape {a.shape}")
    inverse = np.argsort(axes)

    def bwd(g):
        return (g.transpose(inverse),)

    return _finish(a.data.transpose(axes), (a,), bwd, "permute")


def concat(tensors: list[Tensor], axis: int = 0) -> Tensor:
    if not tensors:
        raise AutodiffError("concat: empty input list")
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def bwd(g):
        slicer = [slice(None)] * g.ndim
        outs = []
        for i in range(len(tensors)):
            slicer[axis] = slice(offsets[i], offsets[i + 1])
            outs.append(g[tuple(slicer)])
        return tuple(outs)

    return _finish(
        np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), bwd, "concat"
    )


def slice_axis(a: Tensor, axis: int, start: int, stop: int) -> Tensor:
    """Contiguous slice along one axis; backward zero-pads the complement."""
    axis = axis % a.ndim
    slicer = [slice(None)] * a.ndim
    slicer[axis] = slice(start, stop)
    slicer = tuple(slicer)

    def bwd(g):
        out = np.zeros_like(a.data)
        out[slicer] = g
        return (out,)

    return _finish(a.data[slicer].copy(), (a,), bwd, "slice_axis")


def index_rows(a: Tensor, indices: np.ndarray, assume_unique: bool = False) -> Tensor:
    """Gather rows along axis 0; backward scatter-adds into the source.

    assume_unique promises no repeated index, letting backward scatter by
    assignment instead of the much slower np.add.at.
    """
    idx = np.asarray(indices, dtype=np.intp)
    if idx.ndim != 1:
        raise AutodiffError(f"index_rows: indices must be 1-D, got {idx.shape}")
    if idx.size and (idx.min() < 0 or idx.max() >= a.shape[0]):
        raise AutodiffError(
            f"index_rows: index out of range for {a.shape[0]} rows"
        )

    def bwd(g):
        out = np.zeros_like(a.data)
        if assume_unique:
            out[idx] = g
        else:
            np.add.at(out, idx, g)
        return (out,)

    return _finish(a.data[idx], (a,), bwd, "index_rows")


# ---------------------------------------------------------------------------
# contractions


def _swap_last(x: np.ndarray) -> np.ndarray:
    return np.swapaxes(x, -1, -2)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product over the last two axes.

    Supports 2-D @ 2-D, stacked N-D @ N-D with identical leading dims, and
    N-D @ 2-D (a shared right operand, the linear-layer case).
    """
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise AutodiffError(f"matmul: shapes {a.shape} and {b.shape} do not contract")
    shared_rhs = b.ndim == 2 and a.ndim > 2
    if not shared_rhs and a.shape[:-2] != b.shape[:-2]:
        raise AutodiffError(
            f"matmul: leading dims of {a.shape} and {b.shape} do not match"
        )

    def bwd(g):
        ga = g @ _swap_last(b.data) if a.requires_grad else None
        gb = None
        if b.requires_grad:
            if shared_rhs:
                k, n = a.shape[-1], g.shape[-1]
                gb = a.data.reshape(-1, k).T @ g.reshape(-1, n)
            else:
                gb = _swap_last(a.data) @ g
        return ga, gb

    return _finish(a.data @ b.data, (a, b), bwd, "matmul")


@lru_cache(maxsize=64)
def _conv_geometry(h: int, w: int, k: int, stride: int, pad: int) -> tuple[int, int]:
    oh = (h + 2 * pad - k) // stride + 1
    ow = (w + 2 * pad - k) // stride + 1
    return oh, ow


def _im2col(x: np.ndarray, k: int, stride: int, pad: int) -> np.ndarray:
    """(B,H,W,C) -> (B*OH*OW, C*k*k) patch matrix, (c, ky, kx) inner order."""
    b, h, w, c = x.shape
    oh, ow = _conv_geometry(h, w, k, stride, pad)
    if stride == k and pad == 0:
        # patchify fast path: non-overlapping tiles are a pure rearrangement
        tiles = x.reshape(b, oh, k, ow, k, c).transpose(0, 1, 3, 5, 2, 4)
        return np.ascontiguousarray(tiles).reshape(b * oh * ow, c * k * k)
    if pad:
        x = np.pad(x, ((0, 0), (pad, pad), (pad, pad), (0, 0)))
    windows = np.lib.stride_tricks.sliding_window_view(x, (k, k), axis=(1, 2))
    windows = windows[:, ::stride, ::stride]  # (B,OH,OW,C,k,k)
    return np.ascontiguousarray(windows).reshape(b * oh * ow, c * k * k)


def _col2im_patchify(cols: np.ndarray, shape: tuple, k: int) -> np.ndarray:
    """Inverse of the non-overlapping patchify rearrangement."""
    b, h, w, c = shape
    oh, ow = h // k, w // k
    tiles = cols.reshape(b, oh, ow, c, k, k).transpose(0, 1, 4, 2, 5, 3)
    return np.ascontiguousarray(tiles).reshape(b, h, w, c)


def _conv_forward(x: np.ndarray, w: np.ndarray, stride: int, pad: int) -> np.ndarray:
    b = x.shape[0]
    f, c, k, _ = w.shape
    oh, ow = _conv_geometry(x.shape[1], x.shape[2], k, stride, pad)
    cols = _im2col(x, k, stride, pad)
    y = cols @ w.reshape(f, c * k * k).T
    return y.reshape(b, oh, ow, f)


def conv2d(x: Tensor, w: Tensor, b: Tensor | None = None, stride: int = 1, pad: int = 0) -> Tensor:
    """2-D cross-correlation via im2col + matmul, channel-last activations.

    x: (B, H, W, C); w: (F, C, k, k); b: (F,) or None; output (B, OH, OW, F).
    Supported regimes: stride == kernel with pad 0 (patch embedding) and
    stride 1 with any pad.
    """
    if x.ndim != 4 or w.ndim != 4:
        raise AutodiffError(f"conv2d: need 4-D x and w, got {x.shape}, {w.shape}")
    f, c, k, k2 = w.shape
    if k != k2:
        raise AutodiffError(f"conv2d: non-square kernel {w.shape}")
    if x.shape[3] != c:
        raise AutodiffError(f"conv2d: x channels {x.shape[3]} != kernel channels {c}")
    patchify = stride == k and pad == 0
    if not patchify and stride != 1:
        raise AutodiffError(f"conv2d: unsupported stride {stride} for kernel {k}")
    if patchify and (x.shape[1] % k or x.shape[2] % k):
        raise AutodiffError(f"conv2d: input {x.shape} not tileable by kernel {k}")
    if b is not None and b.shape != (f,):
        raise AutodiffError(f"conv2d: bias shape {b.shape} != ({f},)")

    bsz = x.shape[0]
    oh, ow = _conv_geometry(x.shape[1], x.shape[2], k, stride, pad)
    cols = _im2col(x.data, k, stride, pad)
    wmat = w.data.reshape(f, c * k * k)
    y = (cols @ wmat.T).reshape(bsz, oh, ow, f)
    if b is not None:
        y = y + b.data

    def bwd(g):
        gmat = g.reshape(bsz * oh * ow, f)
        gw = (gmat.T @ cols).reshape(f, c, k, k) if w.requires_grad else None
        gx = None
        if x.requires_grad:
            if patchify:
                gx = _col2im_patchify(gmat @ wmat, x.shape, k)
            else:
                # stride 1: input grad is a full correlation with the
                # flipped, channel-transposed kernel
                w_flip = w.data[:, :, ::-1, ::-1].transpose(1, 0, 2, 3)
                gx = _conv_forward(g, np.ascontiguousarray(w_flip), 1, k - 1 - pad)
        gb = gmat.sum(axis=0) if b is not None and b.requires_grad else None
        if b is not None:
            return gx, gw, gb
        return gx, gw

    inputs = (x, w) if b is None else (x, w, b)
    return _finish(y, inputs, bwd, "conv2d")


# ---------------------------------------------------------------------------
# batch normalization


def _bn_axes(ndim: int, channel_axis: int) -> tuple[int, ...]:
    return tuple(i for i in range(ndim) if i != channel_axis % ndim)


def batch_norm(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    channel_axis: int = -1,
    eps: float = 1e-5,
) -> tuple[Tensor, np.ndarray, np.ndarray]:
    """Train-mode batch normalization over all axes except the channel axis.

    Returns (y, batch_mean, batch_var); the stats are plain arrays for the
    caller's running-average update and carry no gradient.
    """
    ax = channel_axis % x.ndim
    c = x.shape[ax]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise AutodiffError(
            f"batch_norm: gamma/beta shapes {gamma.shape}/{beta.shape} != ({c},)"
        )
    red = _bn_axes(x.ndim, ax)
    m = x.data.size // c
    if m < 2:
        raise AutodiffError("batch_norm: needs at least 2 elements per channel")
    bshape = [1] * x.ndim
    bshape[ax] = c

    if ax == x.ndim - 1:
        # channel-last fast path: flat (n, c) view, einsum moments
        xr = x.data.reshape(-1, c)
        n = xr.shape[0]
        mu = xr.mean(axis=0)
        mu2 = np.einsum("nc,nc->c", xr, xr) / n
        var = np.maximum(mu2 - mu * mu, 0.0)
        inv = 1.0 / np.sqrt(var + eps)
        xhat = (xr - mu) * inv
        y = (xhat * gamma.data + beta.data).reshape(x.shape)

        def bwd(g):
            gr = g.reshape(-1, c)
            gx = None
            if x.requires_grad:
                dxhat = gr * gamma.data
                t1 = dxhat.mean(axis=0)
                t2 = np.einsum("nc,nc->c", dxhat, xhat) / n
                gx = (inv * (dxhat - t1 - xhat * t2)).reshape(x.shape)
            ggamma = np.einsum("nc,nc->c", gr, xhat) if gamma.requires_grad else None
            gbeta = gr.sum(axis=0) if beta.requires_grad else None
            return gx, ggamma, gbeta

        out = _finish(y, (x, gamma, beta), bwd, "batch_norm")
        return out, mu.copy(), var.copy()

    mu = x.data.mean(axis=red, keepdims=True)
    centered = x.data - mu
    var = np.mean(centered * centered, axis=red, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv
    gamma_b = gamma.data.reshape(bshape)
    y = gamma_b * xhat + beta.data.reshape(bshape)

    def bwd(g):
        dxhat = g * gamma_b
        gx = None
        if x.requires_grad:
            gx = inv * (
                dxhat
                - dxhat.mean(axis=red, keepdims=True)
                - xhat * (dxhat * xhat).mean(axis=red, keepdims=True)
            )
        ggamma = (g * xhat).sum(axis=red) if gamma.requires_grad else None
        gbeta = g.sum(axis=red) if beta.requires_grad else None
        return gx, ggamma, gbeta

    out = _finish(y, (x, gamma, beta), bwd, "batch_norm")
    return out, mu.reshape(c), var.reshape(c)


def batch_norm_inference(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    channel_axis: int = -1,
    eps: float = 1e-5,
) -> Tensor:
    """Eval-mode normalization by frozen running statistics."""
    ax = channel_axis % x.ndim
    c = x.shape[ax]
    bshape = [1] * x.ndim
    bshape[ax] = c
    inv = (1.0 / np.sqrt(running_var + eps)).reshape(bshape)
    mu = running_mean.reshape(bshape)
    xhat = (x.data - mu) * inv
    gamma_b = gamma.data.reshape(bshape)
    y = gamma_b * xhat + beta.data.reshape(bshape)
    red = _bn_axes(x.ndim, ax)

    def bwd(g):
        return g * gamma_b * inv, (g * xhat).sum(axis=red), g.sum(axis=red)

    return _finish(y, (x, gamma, beta), bwd, "batch_norm_inference")

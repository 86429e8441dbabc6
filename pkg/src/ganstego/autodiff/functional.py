"""Fused differentiable layer primitives on NCHW arrays.

Convolution is cross-correlation (no kernel flip), matching the usual deep
learning convention. Both convolution directions are lowered to one matrix
product over an im2col buffer.
"""
from __future__ import annotations

import numpy as np

from .tensor import ShapeError, Tensor, make


def conv_out_extent(n: int, k: int, stride: int, padding: int) -> int:
    span = n + 2 * padding - k
    if span < 0 or span % stride:
        raise ShapeError(
            f"non-integer output extent: ({n} + 2*{padding} - {k}) / {stride} + 1"
        )
    return span // stride + 1


def tconv_out_extent(n: int, k: int, stride: int, padding: int) -> int:
    out = (n - 1) * stride - 2 * padding + k
    if out <= 0:
        raise ShapeError(f"transposed conv produces empty extent from {n}")
    return out


def _im2col(x: np.ndarray, k: int, stride: int, padding: int, ho: int, wo: int) -> np.ndarray:
    # NCHW -> (C*k*k, N*Ho*Wo); rows ordered (c, i, j) to match weight.reshape(F, -1)
    n, c, h, w = x.shape
    xc = np.zeros((c, n, h + 2 * padding, w + 2 * padding), dtype=x.dtype)
    xc[:, :, padding : padding + h, padding : padding + w] = x.transpose(1, 0, 2, 3)
    cols = np.empty((c, k, k, n, ho, wo), dtype=x.dtype)
    for i in range(k):
        for j in range(k):
            cols[:, i, j] = xc[:, :, i : i + stride * (ho - 1) + 1 : stride, j : j + stride * (wo - 1) + 1 : stride]
    return cols.reshape(c * k * k, n * ho * wo)


def _col2im(cols: np.ndarray, hp: int, wp: int, stride: int) -> np.ndarray:
    # (C, k, k, N, Ho, Wo) -> (C, N, Hp, Wp), overlapping windows summed
    c, k, _, n, ho, wo = cols.shape
    out = np.zeros((c, n, hp, wp), dtype=cols.dtype)
    for i in range(k):
        for j in range(k):
            out[:, :, i : i + stride * (ho - 1) + 1 : stride, j : j + stride * (wo - 1) + 1 : stride] += cols[:, i, j]
    return out


def _to_nchw(a: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(a.transpose(1, 0, 2, 3))


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None, stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlate ``x`` [N,C,H,W] with ``weight`` [F,C,kh,kw]."""
    if x.ndim != 4 or weight.ndim != 4 or x.shape[1] != weight.shape[1]:
        raise ShapeError(f"conv2d input {x.shape} incompatible with kernel {weight.shape}")
    if weight.shape[2] != weight.shape[3]:
        raise ShapeError(f"only square kernels are supported, got {weight.shape}")
    if stride < 1 or padding < 0:
        raise ShapeError(f"invalid stride {stride} / padding {padding}")
    n, c, h, w = x.shape
    f, _, k, _ = weight.shape
    ho = conv_out_extent(h, k, stride, padding)
    wo = conv_out_extent(w, k, stride, padding)
    cols = _im2col(x.data, k, stride, padding, ho, wo)
    wmat = weight.data.reshape(f, -1)
    out = wmat @ cols
    if bias is not None:
        out += bias.data[:, None]
    out = _to_nchw(out.reshape(f, n, ho, wo))
    inputs = (x, weight) if bias is None else (x, weight, bias)

    def bw(g, needs):
        gm = np.ascontiguousarray(g.transpose(1, 0, 2, 3)).reshape(f, -1)
        gx = gw = gb = None
        if needs[0]:
            dcols = (wmat.T @ gm).reshape(c, k, k, n, ho, wo)
            full = _col2im(dcols, h + 2 * padding, w + 2 * padding, stride)
            gx = _to_nchw(full[:, :, padding : padding + h, padding : padding + w])
        if needs[1]:
            gw = (gm @ cols.T).reshape(weight.shape)
        if bias is not None and needs[2]:
            gb = gm.sum(axis=1)
        return (gx, gw, gb)

    return make(out, inputs, bw)


def conv_transpose2d(x: Tensor, weight: Tensor, bias: Tensor | None = None, stride: int = 1, padding: int = 0) -> Tensor:
    """Transposed convolution; ``weight`` is [C_in, C_out, kh, kw].

    This is the adjoint of :func:`conv2d` with the same geometry, so
    H' = (H - 1) * stride - 2 * padding + kh.
    """
    if x.ndim != 4 or weight.ndim != 4 or x.shape[1] != weight.shape[0]:
        raise ShapeError(f"conv_transpose2d input {x.shape} incompatible with kernel {weight.shape}")
    if weight.shape[2] != weight.shape[3]:
        raise ShapeError(f"only square kernels are supported, got {weight.shape}")
    if stride < 1 or padding < 0:
        raise ShapeError(f"invalid stride {stride} / padding {padding}")
    n, cin, h, w = x.shape
    _, cout, k, _ = weight.shape
    ho = tconv_out_extent(h, k, stride, padding)
    wo = tconv_out_extent(w, k, stride, padding)
    xm = np.ascontiguousarray(x.data.transpose(1, 0, 2, 3)).reshape(cin, -1)
    wmat = weight.data.reshape(cin, -1)
    cols = (wmat.T @ xm).reshape(cout, k, k, n, h, w)
    full = _col2im(cols, ho + 2 * padding, wo + 2 * padding, stride)
    full = full[:, :, padding : padding + ho, padding : padding + wo]
    if bias is not None:
        full = full + bias.data.reshape(-1, 1, 1, 1)
    out = _to_nchw(full)
    inputs = (x, weight) if bias is None else (x, weight, bias)

    def bw(g, needs):
        gcols = _im2col(g, k, stride, padding, h, w)
        gx = gw = gb = None
        if needs[0]:
            gx = _to_nchw((wmat @ gcols).reshape(cin, n, h, w))
        if needs[1]:
            gw = (xm @ gcols.T).reshape(weight.shape)
        if bias is not None and needs[2]:
            gb = g.sum(axis=(0, 2, 3))
        return (gx, gw, gb)

    return make(out, inputs, bw)


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """Dense layer: x [N, in] times weight [out, in] transposed, plus bias."""
    if x.ndim != 2 or weight.ndim != 2 or x.shape[1] != weight.shape[1]:
        raise ShapeError(f"linear input {x.shape} incompatible with weight {weight.shape}")
    xd, wd = x.data, weight.data
    out = xd @ wd.T
    if bias is not None:
        out = out + bias.data
    inputs = (x, weight) if bias is None else (x, weight, bias)

    def bw(g, needs):
        gx = g @ wd if needs[0] else None
        gw = g.T @ xd if needs[1] else None
        gb = g.sum(axis=0) if bias is not None and needs[2] else None
        return (gx, gw, gb)

    return make(out, inputs, bw)


def batch_norm(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    training: bool,
    momentum: float = 0.1,
    eps: float = 1e-5,
    update_stats: bool = True,
) -> Tensor:
    """Per-channel normalization over every axis except axis 1.

    In training mode batch statistics are used and, when ``update_stats`` is
    set, the running buffers are updated in place (unbiased variance). In
    inference mode the running buffers are used and the op is affine.
    """
    axes = (0,) + tuple(range(2, x.ndim))
    bshape = (1, -1) + (1,) * (x.ndim - 2)
    xd = x.data
    g_ = gamma.data.reshape(bshape)
    if training:
        count = xd.size // xd.shape[1]
        if count < 2:
            raise ShapeError("batch norm in training mode needs more than one value per channel")
        mu = xd.mean(axis=axes, keepdims=True)
        xc = xd - mu
        var = (xc * xc).mean(axis=axes, keepdims=True)
        invstd = 1.0 / np.sqrt(var + eps)
        xhat = xc * invstd
        if update_stats:
            running_mean *= 1.0 - momentum
            running_mean += momentum * mu.reshape(-1)
            running_var *= 1.0 - momentum
            running_var += momentum * var.reshape(-1) * (count / (count - 1))
        out = xhat * g_ + beta.data.reshape(bshape)

        def bw(g, needs):
            gx = None
            if needs[0]:
                dxhat = g * g_
                s1 = dxhat.mean(axis=axes, keepdims=True)
                s2 = (dxhat * xhat).mean(axis=axes, keepdims=True)
                gx = invstd * (dxhat - s1 - xhat * s2)
            ggamma = (g * xhat).sum(axis=axes) if needs[1] else None
            gbeta = g.sum(axis=axes) if needs[2] else None
            return (gx, ggamma, gbeta)

        return make(out, (x, gamma, beta), bw)

    invstd = (1.0 / np.sqrt(running_var + eps)).astype(xd.dtype).reshape(bshape)
    xhat = (xd - running_mean.reshape(bshape)) * invstd
    out = xhat * g_ + beta.data.reshape(bshape)

    def bw_eval(g, needs):
        gx = g * g_ * invstd if needs[0] else None
        ggamma = (g * xhat).sum(axis=axes) if needs[1] else None
        gbeta = g.sum(axis=axes) if needs[2] else None
        return (gx, ggamma, gbeta)

    return make(out, (x, gamma, beta), bw_eval)


def avg_pool2d(x: Tensor, k: int = 2) -> Tensor:
    n, c, h, w = x.shape
    if h % k or w % k:
        raise ShapeError(f"avg_pool2d extent {h}x{w} not divisible by {k}")
    return x.reshape(n, c, h // k, k, w // k, k).mean(axis=(3, 5))


def global_avg_pool(x: Tensor) -> Tensor:
    return x.mean(axis=(2, 3))

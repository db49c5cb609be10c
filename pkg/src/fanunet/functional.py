"""Structured differentiable ops: convolution, normalization, softmax, resampling."""

from __future__ import annotations

from typing import Optional, Sequence, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .tensor import ShapeError, Tensor, _norm_axis, add, mul, reshape


def _conv_out(n: int, k: int, stride: int, padding: int, axis: str) -> int:
    span = n + 2 * padding - k
    if span < 0 or span % stride:
        raise ShapeError(
            f"conv2d {axis}: ({n} + 2*{padding} - {k}) / {stride} + 1 is not a positive integer"
        )
    return span // stride + 1


def im2col(x: np.ndarray, k: int, stride: int, padding: int) -> Tuple[np.ndarray, int, int]:
    """Lower [B,C,H,W] to a [B*H'*W', C*k*k] patch matrix."""
    B, C, H, W = x.shape
    Ho = _conv_out(H, k, stride, padding, "height")
    Wo = _conv_out(W, k, stride, padding, "width")
    if padding:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    win = sliding_window_view(x, (k, k), axis=(2, 3))[:, :, ::stride, ::stride]
    # win: [B, C, Ho, Wo, k, k]
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(B * Ho * Wo, C * k * k)
    return cols, Ho, Wo


def col2im(cols: np.ndarray, shape, k: int, stride: int, padding: int, Ho: int, Wo: int) -> np.ndarray:
    B, C, H, W = shape
    patches = cols.reshape(B, Ho, Wo, C, k, k).transpose(0, 3, 4, 5, 1, 2)
    out = np.zeros((B, C, H + 2 * padding, W + 2 * padding), dtype=cols.dtype)
    for i in range(k):
        for j in range(k):
            out[:, :, i : i + stride * Ho : stride, j : j + stride * Wo : stride] += patches[:, :, i, j]
    if padding:
        out = out[:, :, padding:-padding, padding:-padding]
    return np.ascontiguousarray(out)


def conv2d(
    x: Tensor, weight: Tensor, bias: Optional[Tensor] = None, stride: int = 1, padding: int = 0
) -> Tensor:
    """Cross-correlation of x [B,C_in,H,W] with weight [C_out,C_in,k,k]."""
    if x.ndim != 4 or weight.ndim != 4:
        raise ShapeError(f"conv2d expects 4-D input and weight, got {x.shape} and {weight.shape}")
    C_out, C_in, kh, kw = weight.shape
    if kh != kw or kh < 1:
        raise ShapeError(f"conv2d needs a square kernel, got {kh}x{kw}")
    if x.shape[1] != C_in:
        raise ShapeError(f"conv2d channel mismatch: input {x.shape} vs weight {weight.shape}")
    if stride < 1 or padding < 0:
        raise ValueError(f"invalid stride={stride} / padding={padding}")
    if bias is not None and bias.shape != (C_out,):
        raise ShapeError(f"conv2d bias shape {bias.shape} != ({C_out},)")
    k = kh
    B = x.shape[0]
    if k == 1 and stride == 1 and padding == 0:
        Ho, Wo = x.shape[2], x.shape[3]
        cols = x.data.transpose(0, 2, 3, 1).reshape(-1, C_in)
    else:
        cols, Ho, Wo = im2col(x.data, k, stride, padding)
    wmat = weight.data.reshape(C_out, -1)
    out = cols @ wmat.T
    if bias is not None:
        out += bias.data
    out = np.ascontiguousarray(out.reshape(B, Ho, Wo, C_out).transpose(0, 3, 1, 2))

    def backward(g):
        g2 = g.transpose(0, 2, 3, 1).reshape(-1, C_out)
        gw = (g2.T @ cols).reshape(weight.shape) if weight.requires_grad else None
        gb = g2.sum(axis=0) if bias is not None and bias.requires_grad else None
        gx = None
        if x.requires_grad:
            gcols = g2 @ wmat
            if k == 1 and stride == 1 and padding == 0:
                gx = np.ascontiguousarray(gcols.reshape(B, Ho, Wo, C_in).transpose(0, 3, 1, 2))
            else:
                gx = col2im(gcols, x.shape, k, stride, padding, Ho, Wo)
        return gx, gw, gb

    parents = (x, weight) if bias is None else (x, weight, bias)
    return Tensor._make(out, parents, backward)


def normalize(x: Tensor, axes: Sequence[int], eps: float = 1e-5) -> Tensor:
    """(x - mean) / sqrt(var + eps) over ``axes``, biased variance."""
    axes = _norm_axis(tuple(axes), x.ndim)
    n = int(np.prod([x.shape[a] for a in axes]))
    mu = x.data.mean(axis=axes, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=axes, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv

    def backward(g):
        sg = g.sum(axis=axes, keepdims=True)
        sgx = (g * xhat).sum(axis=axes, keepdims=True)
        return ((inv / n) * (n * g - sg - xhat * sgx),)

    return Tensor._make(xhat.astype(x.dtype, copy=False), (x,), backward)


def _affine_shape(x: Tensor, axes: Tuple[int, ...]) -> Tuple[int, ...]:
    return tuple(x.shape[i] if i in axes else 1 for i in range(x.ndim))


def layer_norm(
    x: Tensor, axes: Sequence[int], gamma: Optional[Tensor], beta: Optional[Tensor], eps: float = 1e-5
) -> Tensor:
    """Normalize over ``axes`` then apply the affine ``gamma``/``beta``.

    ``gamma`` and ``beta`` have the extents of the normalized dims, in order.
    """
    axes = _norm_axis(tuple(axes), x.ndim)
    expected = tuple(x.shape[a] for a in sorted(axes))
    for name, p in (("gamma", gamma), ("beta", beta)):
        if p is not None and p.shape != expected:
            raise ShapeError(f"layer_norm {name} shape {p.shape} != normalized extents {expected}")
    y = normalize(x, axes, eps)
    bshape = _affine_shape(x, axes)
    if gamma is not None:
        y = mul(y, reshape(gamma, bshape))
    if beta is not None:
        y = add(y, reshape(beta, bshape))
    return y


def group_norm(x: Tensor, groups: int, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    B, C = x.shape[:2]
    if C % groups:
        raise ShapeError(f"group_norm: {C} channels not divisible into {groups} groups")
    rest = x.shape[2:]
    y = reshape(x, (B, groups, C // groups) + rest)
    y = normalize(y, tuple(range(2, y.ndim)), eps)
    y = reshape(y, x.shape)
    bshape = (1, C) + (1,) * len(rest)
    return add(mul(y, reshape(gamma, bshape)), reshape(beta, bshape))


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    (axis,) = _norm_axis(axis, x.ndim)
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (s * (g - (g * s).sum(axis=axis, keepdims=True)),)

    return Tensor._make(s, (x,), backward)


def maxpool2x2(x: Tensor) -> Tensor:
    B, C, H, W = x.shape
    if H % 2 or W % 2:
        raise ShapeError(f"maxpool2x2 needs even spatial extents, got {H}x{W}")
    blocks = x.data.reshape(B, C, H // 2, 2, W // 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(B, C, H // 2, W // 2, 4)
    idx = blocks.argmax(axis=-1)[..., None]
    out = np.take_along_axis(blocks, idx, axis=-1)[..., 0]

    def backward(g):
        gb = np.zeros_like(blocks)
        np.put_along_axis(gb, idx, g[..., None], axis=-1)
        gx = gb.reshape(B, C, H // 2, W // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(B, C, H, W)
        return (np.ascontiguousarray(gx),)

    return Tensor._make(np.ascontiguousarray(out), (x,), backward)


_UPSAMPLE_CACHE: dict = {}


def _upsample_matrix(n: int, dtype) -> np.ndarray:
    """[2n, n] linear interpolation matrix, half-pixel centers, edge clamped."""
    key = (n, np.dtype(dtype).str)
    if key not in _UPSAMPLE_CACHE:
        m = np.zeros((2 * n, n), dtype=dtype)
        for o in range(2 * n):
            src = min(max((o + 0.5) / 2.0 - 0.5, 0.0), n - 1)
            lo = int(np.floor(src))
            hi = min(lo + 1, n - 1)
            frac = src - lo
            m[o, lo] += 1.0 - frac
            m[o, hi] += frac
        _UPSAMPLE_CACHE[key] = m
    return _UPSAMPLE_CACHE[key]


def bilinear_upsample2x(x: Tensor) -> Tensor:
    B, C, H, W = x.shape
    uh = _upsample_matrix(H, x.dtype)
    uw = _upsample_matrix(W, x.dtype)
    out = np.matmul(np.matmul(uh, x.data), uw.T)

    def backward(g):
        return (np.ascontiguousarray(np.matmul(np.matmul(uh.T, g), uw)),)

    return Tensor._make(out, (x,), backward)


def linear(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """x [..., d_in] @ weight [d_in, d_out] + bias [d_out]."""
    y = x @ weight
    return y if bias is None else y + bias

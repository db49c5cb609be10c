"""Additive 2D positional embedding and non-overlapping window self-attention."""

from __future__ import annotations

import math

import numpy as np

from . import functional as F
from .nn import Linear, Module, param
from .tensor import ShapeError, Tensor, matmul


class ConfigError(ValueError):
    """Raised when a layer or model configuration is inconsistent."""


class PositionalEmbedding2D(Module):
    def __init__(self, channels: int, height: int, width: int, rng: np.random.Generator, std: float = 0.02, dtype=np.float32):
        self.table = param(rng.normal(0.0, std, size=(1, channels, height, width)), dtype)

    def forward(self, x: Tensor) -> Tensor:
        if x.shape[1:] != self.table.shape[1:]:
            raise ShapeError(f"positional table {self.table.shape} does not match input {x.shape}")
        return x + self.table


def window_partition(x: Tensor, w: int) -> Tensor:
    """[B,C,H,W] -> [B*nH*nW, w*w, C], windows in row-major order."""
    B, C, H, W = x.shape
    t = x.reshape(B, C, H // w, w, W // w, w).transpose(0, 2, 4, 3, 5, 1)
    return t.reshape(B * (H // w) * (W // w), w * w, C)


def window_merge(t: Tensor, shape) -> Tensor:
    B, C, H, W = shape
    w = int(round(math.sqrt(t.shape[1])))
    x = t.reshape(B, H // w, W // w, w, w, C).transpose(0, 5, 1, 3, 2, 4)
    return x.reshape(B, C, H, W)


class WindowAttention(Module):
    """Multi-head scaled dot-product attention inside w x w windows."""

    def __init__(self, channels: int, window_size: int, num_heads: int, rng: np.random.Generator, std: float = 0.02, dtype=np.float32):
        if window_size < 1 or num_heads < 1:
            raise ConfigError(f"window_size and num_heads must be positive, got {window_size}, {num_heads}")
        if channels % num_heads:
            raise ConfigError(f"channels={channels} not divisible by num_heads={num_heads}")
        self.q = Linear(channels, channels, rng, std=std, dtype=dtype)
        self.k = Linear(channels, channels, rng, std=std, dtype=dtype)
        self.v = Linear(channels, channels, rng, std=std, dtype=dtype)
        self.o = Linear(channels, channels, rng, std=std, dtype=dtype)
        self.channels = channels
        self.window_size = window_size
        self.num_heads = num_heads
        self.last_weights: np.ndarray = None

    def attend(self, tokens: Tensor) -> Tensor:
        """Self-attention over [n, T, C] token groups."""
        n, T, C = tokens.shape
        h, dh = self.num_heads, C // self.num_heads

        def heads(t: Tensor) -> Tensor:
            return t.reshape(n, T, h, dh).transpose(0, 2, 1, 3)

        q, k, v = heads(self.q(tokens)), heads(self.k(tokens)), heads(self.v(tokens))
        scores = matmul(q, k.transpose(0, 1, 3, 2)) * (1.0 / math.sqrt(dh))
        weights = F.softmax(scores, axis=-1)
        self.last_weights = weights.data
        ctx = matmul(weights, v).transpose(0, 2, 1, 3).reshape(n, T, C)
        return self.o(ctx)

    def forward(self, x: Tensor) -> Tensor:
        if x.ndim != 4 or x.shape[1] != self.channels:
            raise ShapeError(f"WindowAttention expects [B, {self.channels}, H, W], got {x.shape}")
        H, W, w = x.shape[2], x.shape[3], self.window_size
        if H % w or W % w:
            raise ConfigError(f"feature map {H}x{W} is not divisible by window size {w}")
        out = self.attend(window_partition(x, w))
        return window_merge(out, x.shape)

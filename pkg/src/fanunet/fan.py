"""Fourier Analysis Network layers.

``FANLayer1D`` maps x to [cos(x W_p) | sin(x W_p) | act(x W_p' + B_p)].
``FANLayer2D`` does the same per pixel with 1x1 convolutions, including a bias on
the periodic pre-activation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import functional as F
from .nn import Conv2d, Module, kaiming_uniform, param
from .tensor import ShapeError, Tensor, concat, cos, get_activation, matmul, sin


@dataclass
class FanSeriesParams:
    """f(x) = B + W_c cos(W_in x) + W_s sin(W_in x)."""

    bias: Tensor  # [d_y]
    w_in: Tensor  # [N, d_x]
    w_cos: Tensor  # [d_y, N]
    w_sin: Tensor  # [d_y, N]

    def __post_init__(self):
        n, d_x = self.w_in.shape
        d_y = self.bias.shape[0]
        if self.w_cos.shape != (d_y, n) or self.w_sin.shape != (d_y, n):
            raise ShapeError(
                f"inconsistent series params: bias {self.bias.shape}, w_in {self.w_in.shape}, "
                f"w_cos {self.w_cos.shape}, w_sin {self.w_sin.shape}"
            )


def fan_series_eval(p: FanSeriesParams, x: Tensor) -> Tensor:
    """Evaluate the matrix-form series at x [d_x] (or a batch [batch, d_x])."""
    single = x.ndim == 1
    xb = x.reshape(1, -1) if single else x
    if xb.shape[1] != p.w_in.shape[1]:
        raise ShapeError(f"x has {xb.shape[1]} features, w_in expects {p.w_in.shape[1]}")
    z = matmul(xb, p.w_in.T)  # [batch, N]
    y = matmul(cos(z), p.w_cos.T) + matmul(sin(z), p.w_sin.T) + p.bias
    return y.reshape(-1) if single else y


def split_channels(c_out: int, p_ratio: float = 0.25):
    """Return (d_p, d_g) with 2*d_p + d_g == c_out."""
    if not 0.0 < p_ratio < 0.5:
        raise ValueError(f"p_ratio must lie in (0, 0.5), got {p_ratio}")
    d_p = int(math.floor(p_ratio * c_out))
    d_g = c_out - 2 * d_p
    if d_p < 1 or d_g < 1:
        raise ValueError(f"c_out={c_out} with p_ratio={p_ratio} leaves an empty branch (d_p={d_p}, d_g={d_g})")
    return d_p, d_g


class FANLayer1D(Module):
    def __init__(
        self,
        d_x: int,
        d_p: int,
        d_p_prime: int,
        rng: np.random.Generator,
        activation: str = "gelu",
        periodic_bias: bool = False,
        dtype=np.float32,
    ):
        if d_p < 1 or d_p_prime < 1:
            raise ValueError(f"branch widths must be >= 1, got d_p={d_p}, d_p'={d_p_prime}")
        self.w_p = kaiming_uniform(rng, (d_x, d_p), d_x, dtype)
        self.w_p_prime = kaiming_uniform(rng, (d_x, d_p_prime), d_x, dtype)
        self.b_p = param(np.zeros(d_p_prime), dtype)
        self.b_periodic: Optional[Tensor] = param(np.zeros(d_p), dtype) if periodic_bias else None
        self.activation = activation
        self.d_x, self.d_p, self.d_p_prime = d_x, d_p, d_p_prime

    @property
    def out_features(self) -> int:
        return 2 * self.d_p + self.d_p_prime

    def forward(self, x: Tensor) -> Tensor:
        if x.ndim != 2 or x.shape[1] != self.d_x:
            raise ShapeError(f"FANLayer1D expects [batch, {self.d_x}], got {x.shape}")
        p = F.linear(x, self.w_p, self.b_periodic)
        g = get_activation(self.activation)(F.linear(x, self.w_p_prime, self.b_p))
        return concat([cos(p), sin(p), g], axis=1)


class FANLayer2D(Module):
    """Per-pixel FAN layer: output channels are [cos(P) | sin(P) | act(G)]."""

    def __init__(
        self,
        c_in: int,
        c_out: int,
        rng: np.random.Generator,
        p_ratio: float = 0.25,
        activation: str = "gelu",
        dtype=np.float32,
    ):
        self.d_p, self.d_g = split_channels(c_out, p_ratio)
        self.conv_p = Conv2d(c_in, self.d_p, 1, rng, dtype=dtype)
        self.conv_g = Conv2d(c_in, self.d_g, 1, rng, dtype=dtype)
        self.activation = activation
        self.c_in, self.c_out = c_in, c_out

    def forward(self, x: Tensor) -> Tensor:
        if x.ndim != 4 or x.shape[1] != self.c_in:
            raise ShapeError(f"FANLayer2D expects [B, {self.c_in}, H, W], got {x.shape}")
        p = self.conv_p(x)
        g = get_activation(self.activation)(self.conv_g(x))
        return concat([cos(p), sin(p), g], axis=1)

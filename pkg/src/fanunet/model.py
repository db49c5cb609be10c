"""Vision-FAN block and the FAN-UNet encoder/decoder."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from typing import List, Optional

import numpy as np

from . import functional as F
from .attention import ConfigError, PositionalEmbedding2D, WindowAttention
from .fan import FANLayer2D
from .nn import ChannelLayerNorm, Conv2d, ConvUnit, DoubleConv, Module
from .tensor import ShapeError, Tensor, concat


@dataclass
class VisionFanBlockConfig:
    channels: int
    window_size: int = 8
    num_heads: int = 4
    p_ratio: float = 0.25
    enable_positional: bool = True
    enable_attention: bool = True
    enable_fan_ffn: bool = True

    @property
    def disabled(self) -> bool:
        return not (self.enable_positional or self.enable_attention or self.enable_fan_ffn)


class VisionFanBlock(Module):
    """Pre-norm residual block: window attention then a FANLayer2D feed-forward.

    With ``a = x + PE``::

        u = x + Attn(LN1(a))        if attention is enabled, else u = x
        y = u + FAN(LN2(v))         if the FAN feed-forward is enabled, else y = u

    where ``v = u`` after attention, or ``v = a`` when attention is disabled, so the
    positional table always reaches the first active sublayer. With neither sublayer
    enabled the block returns ``a``.
    """

    def __init__(self, cfg: VisionFanBlockConfig, height: int, width: int, rng: np.random.Generator, dtype=np.float32):
        C = cfg.channels
        if cfg.enable_attention and C % cfg.num_heads:
            raise ConfigError(f"channels={C} not divisible by num_heads={cfg.num_heads}")
        self.cfg = cfg
        self.pos = PositionalEmbedding2D(C, height, width, rng, dtype=dtype) if cfg.enable_positional else None
        if cfg.enable_attention:
            self.norm1 = ChannelLayerNorm(C, dtype=dtype)
            self.attn = WindowAttention(C, cfg.window_size, cfg.num_heads, rng, dtype=dtype)
        if cfg.enable_fan_ffn:
            self.norm2 = ChannelLayerNorm(C, dtype=dtype)
            self.ffn = FANLayer2D(C, C, rng, p_ratio=cfg.p_ratio, dtype=dtype)

    def forward(self, x: Tensor) -> Tensor:
        cfg = self.cfg
        a = self.pos(x) if self.pos is not None else x
        if not (cfg.enable_attention or cfg.enable_fan_ffn):
            return a
        if cfg.enable_attention:
            u = x + self.attn(self.norm1(a))
            v = u
        else:
            u, v = x, a
        if cfg.enable_fan_ffn:
            return u + self.ffn(self.norm2(v))
        return u


@dataclass
class UNetConfig:
    input_channels: int = 3
    num_stages: int = 4
    base_channels: int = 32
    bottleneck_blocks: int = 1
    input_resolution: int = 256
    output_channels: int = 1
    window_size: int = 8
    num_heads: int = 4
    p_ratio: float = 0.25
    enable_positional: bool = True
    enable_attention: bool = True
    enable_fan_ffn: bool = True
    encoder_block: bool = False

    @classmethod
    def from_dict(cls, d: dict) -> "UNetConfig":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in known})

    def to_dict(self) -> dict:
        return asdict(self)

    def channels(self, level: int) -> int:
        return self.base_channels * 2**level

    def block_config(self, channels: int) -> VisionFanBlockConfig:
        return VisionFanBlockConfig(
            channels=channels,
            window_size=self.window_size,
            num_heads=self.num_heads,
            p_ratio=self.p_ratio,
            enable_positional=self.enable_positional,
            enable_attention=self.enable_attention,
            enable_fan_ffn=self.enable_fan_ffn,
        )

    def validate(self) -> None:
        S, R = self.num_stages, self.input_resolution
        if S < 0 or R < 1 or self.base_channels < 1:
            raise ConfigError(f"invalid sizes: num_stages={S}, input_resolution={R}, base_channels={self.base_channels}")
        if R % 2**S:
            raise ConfigError(f"input_resolution {R} not divisible by 2**num_stages = {2**S}")
        if S and self.enable_attention:
            w = self.window_size
            deep = R // 2**S
            if deep % w:
                raise ConfigError(f"bottleneck extent {deep}x{deep} not divisible by window_size {w}")
            if self.encoder_block and (2 * deep) % w:
                raise ConfigError(f"deepest encoder extent {2 * deep} not divisible by window_size {w}")


def _stage_block(cfg: UNetConfig, channels: int, extent: int, rng, dtype) -> Module:
    bcfg = cfg.block_config(channels)
    if bcfg.disabled:
        # ablation: the whole block becomes one plain conv unit of equal width
        return ConvUnit(channels, channels, rng, dtype=dtype)
    return VisionFanBlock(bcfg, extent, extent, rng, dtype=dtype)


class FanUNet(Module):
    def __init__(self, cfg: Optional[UNetConfig] = None, seed: int = 0, dtype=np.float32):
        cfg = cfg or UNetConfig()
        cfg.validate()
        self.cfg = cfg
        self.dtype = np.dtype(dtype)
        rng = np.random.default_rng(seed)
        S, R = cfg.num_stages, cfg.input_resolution

        self.encoder: List[DoubleConv] = []
        c_prev = cfg.input_channels
        for i in range(S):
            self.encoder.append(DoubleConv(c_prev, cfg.channels(i), rng, dtype=dtype))
            c_prev = cfg.channels(i)
        self.encoder_blocks: List[Module] = []
        if S and cfg.encoder_block:
            self.encoder_blocks.append(_stage_block(cfg, cfg.channels(S - 1), R // 2 ** (S - 1), rng, dtype))

        self.bottleneck: List[Module] = []
        if S:
            self.bottleneck.append(DoubleConv(cfg.channels(S - 1), cfg.channels(S), rng, dtype=dtype))
            for _ in range(cfg.bottleneck_blocks):
                self.bottleneck.append(_stage_block(cfg, cfg.channels(S), R // 2**S, rng, dtype))

        self.reduce: List[Conv2d] = []
        self.decoder: List[DoubleConv] = []
        for i in reversed(range(S)):
            self.reduce.append(Conv2d(cfg.channels(i + 1), cfg.channels(i), 1, rng, dtype=dtype))
            self.decoder.append(DoubleConv(2 * cfg.channels(i), cfg.channels(i), rng, dtype=dtype))

        head_in = cfg.channels(0) if S else cfg.input_channels
        self.head = Conv2d(head_in, cfg.output_channels, 1, rng, dtype=dtype)

    def forward(self, x: Tensor) -> Tensor:
        cfg = self.cfg
        R = cfg.input_resolution
        if x.ndim != 4 or x.shape[1:] != (cfg.input_channels, R, R):
            raise ShapeError(f"expected input [B, {cfg.input_channels}, {R}, {R}], got {x.shape}")
        skips = []
        h = x
        last = len(self.encoder) - 1
        for i, stage in enumerate(self.encoder):
            h = stage(h)
            if i == last:
                for blk in self.encoder_blocks:
                    h = blk(h)
            skips.append(h)
            h = F.maxpool2x2(h)
        for layer in self.bottleneck:
            h = layer(h)
        for reduce, stage, skip in zip(self.reduce, self.decoder, reversed(skips)):
            # 1x1 conv commutes with bilinear upsampling; reducing first is 4x cheaper
            h = F.bilinear_upsample2x(reduce(h))
            h = stage(concat([skip, h], axis=1))
        return self.head(h)


def count_parameters(model: Module) -> int:
    """Exact number of learnable scalars."""
    return model.num_parameters()

"""Parameter containers: a small module tree with named, ordered parameters."""

from __future__ import annotations

import math
from typing import Dict, Iterator, List, Tuple

import numpy as np

from . import functional as F
from .tensor import Tensor, get_activation


class Module:
    """Base class; parameters and submodules are discovered from attributes in definition order."""

    def parameters(self) -> List[Tensor]:
        return [p for _, p in self.named_parameters()]

    def named_parameters(self, prefix: str = "") -> Iterator[Tuple[str, Tensor]]:
        for name, value in vars(self).items():
            full = f"{prefix}{name}"
            if isinstance(value, Tensor):
                if value.requires_grad:
                    yield full, value
            elif isinstance(value, Module):
                yield from value.named_parameters(full + ".")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{full}.{i}.")

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {name: p.data for name, p in self.named_parameters()}

    def load_state_dict(self, state: Dict[str, np.ndarray]) -> None:
        own = dict(self.named_parameters())
        missing = sorted(set(own) - set(state))
        unexpected = sorted(set(state) - set(own))
        if missing or unexpected:
            raise KeyError(f"state mismatch: missing={missing} unexpected={unexpected}")
        for name, p in own.items():
            arr = np.asarray(state[name])
            if arr.shape != p.shape:
                raise ValueError(f"{name}: shape {arr.shape} != {p.shape}")
            p.data = np.ascontiguousarray(arr, dtype=p.dtype)

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


def param(data: np.ndarray, dtype) -> Tensor:
    return Tensor(np.asarray(data, dtype=dtype), requires_grad=True)


def kaiming_uniform(rng: np.random.Generator, shape, fan_in: int, dtype) -> Tensor:
    # leaky-relu gain with a = sqrt(5): bound reduces to 1/sqrt(fan_in)
    bound = math.sqrt(6.0 / ((1 + 5.0) * fan_in))
    return param(rng.uniform(-bound, bound, size=shape), dtype)


class Conv2d(Module):
    def __init__(self, c_in: int, c_out: int, k: int, rng: np.random.Generator, padding: int = 0, dtype=np.float32):
        fan_in = c_in * k * k
        self.weight = kaiming_uniform(rng, (c_out, c_in, k, k), fan_in, dtype)
        bound = 1.0 / math.sqrt(fan_in)
        self.bias = param(rng.uniform(-bound, bound, size=(c_out,)), dtype)
        self.padding = padding

    def forward(self, x: Tensor) -> Tensor:
        return F.conv2d(x, self.weight, self.bias, stride=1, padding=self.padding)


class Linear(Module):
    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator, std: float = None, bias: bool = True, dtype=np.float32):
        if std is None:
            self.weight = kaiming_uniform(rng, (d_in, d_out), d_in, dtype)
        else:
            self.weight = param(rng.normal(0.0, std, size=(d_in, d_out)), dtype)
        self.bias = param(np.zeros(d_out), dtype) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        return F.linear(x, self.weight, self.bias)


class GroupNorm(Module):
    def __init__(self, channels: int, groups: int = 8, eps: float = 1e-5, dtype=np.float32):
        self.groups = math.gcd(channels, groups)
        self.weight = param(np.ones(channels), dtype)
        self.bias = param(np.zeros(channels), dtype)
        self.eps = eps

    def forward(self, x: Tensor) -> Tensor:
        return F.group_norm(x, self.groups, self.weight, self.bias, self.eps)


class ChannelLayerNorm(Module):
    """Layer norm over the channel axis of [B,C,H,W], independently per pixel."""

    def __init__(self, channels: int, eps: float = 1e-5, dtype=np.float32):
        self.weight = param(np.ones(channels), dtype)
        self.bias = param(np.zeros(channels), dtype)
        self.eps = eps

    def forward(self, x: Tensor) -> Tensor:
        return F.layer_norm(x, (1,), self.weight, self.bias, self.eps)


class ConvUnit(Module):
    """3x3 conv -> group norm -> activation."""

    def __init__(self, c_in: int, c_out: int, rng: np.random.Generator, activation: str = "gelu", dtype=np.float32):
        self.conv = Conv2d(c_in, c_out, 3, rng, padding=1, dtype=dtype)
        self.norm = GroupNorm(c_out, dtype=dtype)
        self.activation = activation

    def forward(self, x: Tensor) -> Tensor:
        return get_activation(self.activation)(self.norm(self.conv(x)))


class DoubleConv(Module):
    def __init__(self, c_in: int, c_out: int, rng: np.random.Generator, dtype=np.float32):
        self.first = ConvUnit(c_in, c_out, rng, dtype=dtype)
        self.second = ConvUnit(c_out, c_out, rng, dtype=dtype)

    def forward(self, x: Tensor) -> Tensor:
        return self.second(self.first(x))

"""Adam with decoupled weight decay, cosine schedule, global-norm clipping."""

from __future__ import annotations

import math
from typing import Dict, List, Sequence, Tuple

import numpy as np

from .tensor import Tensor


def cosine_lr(step: int, total_steps: int, lr_max: float, lr_min: float) -> float:
    """Learning rate at ``step`` (0-based) of a cosine decay from lr_max to lr_min."""
    if total_steps <= 1:
        return lr_max
    t = min(max(step, 0), total_steps - 1) / (total_steps - 1)
    return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + math.cos(math.pi * t))


def clip_grad_norm(params: Sequence[Tensor], max_norm: float) -> float:
    """Scale grads in place so their global L2 norm is at most ``max_norm``; return the pre-clip norm."""
    total = math.sqrt(sum(float(np.sum(p.grad.astype(np.float64) ** 2)) for p in params if p.grad is not None))
    if max_norm > 0 and total > max_norm:
        scale = max_norm / (total + 1e-12)
        for p in params:
            if p.grad is not None:
                p.grad = p.grad * np.asarray(scale, dtype=p.grad.dtype)
    return total


class AdamW:
    def __init__(
        self,
        params: List[Tensor],
        lr: float = 1e-3,
        betas: Tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
        weight_decay: float = 1e-4,
    ):
        self.params = list(params)
        self.lr = lr
        self.betas = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]
        self.step_count = 0

    def step(self, lr: float = None) -> None:
        lr = self.lr if lr is None else lr
        b1, b2 = self.betas
        self.step_count += 1
        c1 = 1.0 - b1**self.step_count
        c2 = 1.0 - b2**self.step_count
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            update = (m / c1) / (np.sqrt(v / c2) + self.eps)
            p.data = (p.data * (1.0 - lr * self.weight_decay) - lr * update).astype(p.dtype, copy=False)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def state_arrays(self, names: Sequence[str]) -> Dict[str, np.ndarray]:
        out = {}
        for name, m, v in zip(names, self.m, self.v):
            out[f"optim.m.{name}"] = m
            out[f"optim.v.{name}"] = v
        return out

    def load_state_arrays(self, names: Sequence[str], arrays: Dict[str, np.ndarray], step_count: int) -> None:
        for i, name in enumerate(names):
            self.m[i] = np.array(arrays[f"optim.m.{name}"], dtype=self.params[i].dtype)
            self.v[i] = np.array(arrays[f"optim.v.{name}"], dtype=self.params[i].dtype)
        self.step_count = step_count

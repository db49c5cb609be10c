"""Central finite-difference gradient checks for every primitive and composite layer.

All cases run in float64. A case builds leaf tensors and a closure returning a scalar
loss; the autodiff gradient of each leaf is compared with the numerical one using

    err = ||g_auto - g_fd|| / max(||g_auto||, ||g_fd||, floor)

The floor keeps tensors whose true gradient is identically zero (e.g. attention key
biases, which softmax cancels) from turning round-off into a large ratio.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from . import functional as F
from . import tensor as T
from .attention import WindowAttention
from .fan import FanSeriesParams, FANLayer1D, FANLayer2D, fan_series_eval
from .losses import LossConfig, combined_loss
from .model import FanUNet, UNetConfig, VisionFanBlock, VisionFanBlockConfig
from .nn import Module
from .tensor import Tensor

F64 = np.float64
REL_FLOOR = 1e-4

Case = Tuple[Callable[[], Tensor], Dict[str, Tensor]]


def relative_error(auto: np.ndarray, numeric: np.ndarray, floor: float = REL_FLOOR) -> float:
    diff = np.linalg.norm(np.ravel(auto) - np.ravel(numeric))
    scale = max(np.linalg.norm(auto), np.linalg.norm(numeric), floor)
    return float(diff / scale)


def numerical_gradient(fn: Callable[[], Tensor], t: Tensor, h: float = 1e-4, indices=None) -> np.ndarray:
    """Central differences of scalar ``fn()`` w.r.t. ``t`` at ``indices`` (all elements by default)."""
    flat = t.data.reshape(-1)
    idx = range(flat.size) if indices is None else indices
    out = np.zeros(len(idx) if indices is not None else flat.size)
    with T.no_grad():
        for j, i in enumerate(idx):
            orig = flat[i]
            flat[i] = orig + h
            fp = fn().item()
            flat[i] = orig - h
            fm = fn().item()
            flat[i] = orig
            out[j] = (fp - fm) / (2 * h)
    return out if indices is not None else out.reshape(t.shape)


def autodiff_gradients(fn: Callable[[], Tensor], tensors: Dict[str, Tensor]) -> Dict[str, np.ndarray]:
    for t in tensors.values():
        t.grad = None
    fn().backward()
    return {k: (t.grad.copy() if t.grad is not None else np.zeros_like(t.data)) for k, t in tensors.items()}


def check_case(
    fn: Callable[[], Tensor],
    tensors: Dict[str, Tensor],
    h: float = 1e-4,
    samples: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
) -> float:
    """Worst relative error over ``tensors``.

    With ``samples`` set, each tensor is probed at that many random elements and the
    sampled entries of all tensors are compared as one vector.
    """
    auto = autodiff_gradients(fn, tensors)
    if samples is None:
        return max(relative_error(auto[k], numerical_gradient(fn, t, h)) for k, t in tensors.items())
    rng = rng or np.random.default_rng(0)
    a_parts, n_parts = [], []
    for k, t in tensors.items():
        idx = rng.choice(t.size, size=min(samples, t.size), replace=False)
        a_parts.append(auto[k].reshape(-1)[idx])
        n_parts.append(numerical_gradient(fn, t, h, list(idx)))
    return relative_error(np.concatenate(a_parts), np.concatenate(n_parts))


# ---------------------------------------------------------------------------
# cases


def _leaf(rng, *shape, lo=-2.0, hi=2.0) -> Tensor:
    return Tensor(rng.uniform(lo, hi, size=shape), requires_grad=True, dtype=F64)


def _params(module: Module, **extra) -> Dict[str, Tensor]:
    d = dict(module.named_parameters())
    d.update(extra)
    return d


def _weighted_fixed(out: Tensor, r: np.ndarray) -> Tensor:
    # random readout so symmetric sums cannot hide gradient errors
    return (out * Tensor(r, dtype=F64)).sum()


def _unary_case(op, lo=-2.0, hi=2.0):
    def case(rng) -> Case:
        x = _leaf(rng, 3, 5, lo=lo, hi=hi)
        r = rng.normal(size=(3, 5))
        return (lambda: _weighted_fixed(op(x), r)), {"x": x}

    return case


def _binary_case(op, shape_b=(3, 4), lo_b=-2.0):
    def case(rng) -> Case:
        a, b = _leaf(rng, 3, 4), _leaf(rng, *shape_b, lo=lo_b)
        r = rng.normal(size=(3, 4))
        return (lambda: _weighted_fixed(op(a, b), r)), {"a": a, "b": b}

    return case


def case_matmul(rng) -> Case:
    a, b = _leaf(rng, 3, 4), _leaf(rng, 4, 2)
    r = rng.normal(size=(3, 2))
    return (lambda: _weighted_fixed(a @ b, r)), {"a": a, "b": b}


def case_batched_matmul(rng) -> Case:
    a, b = _leaf(rng, 2, 3, 4), _leaf(rng, 4, 5)
    r = rng.normal(size=(2, 3, 5))
    return (lambda: _weighted_fixed(a @ b, r)), {"a": a, "b": b}


def case_reductions(rng) -> Case:
    x = _leaf(rng, 2, 3, 4)
    r = rng.normal(size=(2, 4))
    return (lambda: _weighted_fixed(x.sum(axis=1), r) + x.mean() * 3.0), {"x": x}


def case_shapes(rng) -> Case:
    x, y = _leaf(rng, 2, 3, 4), _leaf(rng, 2, 2, 4)
    r = rng.normal(size=(4, 2, 5))

    def fn():
        z = T.concat([x, y], axis=1)  # [2,5,4]
        z = z.transpose(2, 0, 1)  # [4,2,5]
        z = T.slice_axis(z.reshape(4, 10).reshape(4, 2, 5), 0, 0, 4)
        return _weighted_fixed(z, r)

    return fn, {"x": x, "y": y}


def case_softmax(rng) -> Case:
    x = _leaf(rng, 3, 6)
    r = rng.normal(size=(3, 6))
    return (lambda: _weighted_fixed(F.softmax(x, axis=-1), r)), {"x": x}


def case_layer_norm(rng) -> Case:
    x, g, b = _leaf(rng, 2, 4, 3, 3), _leaf(rng, 4), _leaf(rng, 4)
    r = rng.normal(size=(2, 4, 3, 3))
    return (lambda: _weighted_fixed(F.layer_norm(x, (1,), g, b), r)), {"x": x, "gamma": g, "beta": b}


def case_group_norm(rng) -> Case:
    x, g, b = _leaf(rng, 2, 4, 3, 3), _leaf(rng, 4), _leaf(rng, 4)
    r = rng.normal(size=(2, 4, 3, 3))
    return (lambda: _weighted_fixed(F.group_norm(x, 2, g, b), r)), {"x": x, "gamma": g, "beta": b}


def case_conv2d(rng) -> Case:
    x, w, b = _leaf(rng, 1, 2, 5, 5), _leaf(rng, 3, 2, 3, 3), _leaf(rng, 3)
    r = rng.normal(size=(1, 3, 5, 5))
    return (lambda: _weighted_fixed(F.conv2d(x, w, b, stride=1, padding=1), r)), {"x": x, "weight": w, "bias": b}


def case_conv2d_strided(rng) -> Case:
    x, w, b = _leaf(rng, 2, 2, 5, 5), _leaf(rng, 3, 2, 3, 3), _leaf(rng, 3)
    r = rng.normal(size=(2, 3, 2, 2))
    return (lambda: _weighted_fixed(F.conv2d(x, w, b, stride=2, padding=0), r)), {"x": x, "weight": w, "bias": b}


def case_maxpool(rng) -> Case:
    x = _leaf(rng, 2, 2, 4, 4)
    r = rng.normal(size=(2, 2, 2, 2))
    return (lambda: _weighted_fixed(F.maxpool2x2(x), r)), {"x": x}


def case_upsample(rng) -> Case:
    x = _leaf(rng, 1, 2, 3, 4)
    r = rng.normal(size=(1, 2, 6, 8))
    return (lambda: _weighted_fixed(F.bilinear_upsample2x(x), r)), {"x": x}


def case_composite(rng) -> Case:
    """Four chained ops with a shared input."""
    x, w = _leaf(rng, 3, 4), _leaf(rng, 4, 4)
    return (lambda: (T.sin(x @ w) * T.exp(x * 0.3)).mean()), {"x": x, "w": w}


def case_fan_series(rng) -> Case:
    d_x, d_y, n = 3, 2, 4
    p = FanSeriesParams(_leaf(rng, d_y), _leaf(rng, n, d_x), _leaf(rng, d_y, n), _leaf(rng, d_y, n))
    x = _leaf(rng, 5, d_x)
    r = rng.normal(size=(5, d_y))
    tensors = {"bias": p.bias, "w_in": p.w_in, "w_cos": p.w_cos, "w_sin": p.w_sin, "x": x}
    return (lambda: _weighted_fixed(fan_series_eval(p, x), r)), tensors


def case_fan_layer_1d(rng) -> Case:
    layer = FANLayer1D(3, 4, 5, rng, dtype=F64)
    layer.b_p.data[:] = rng.uniform(-1, 1, size=layer.b_p.shape)
    x = _leaf(rng, 6, 3)
    r = rng.normal(size=(6, layer.out_features))
    return (lambda: _weighted_fixed(layer(x), r)), _params(layer, x=x)


def case_fan_layer_2d(rng) -> Case:
    layer = FANLayer2D(3, 8, rng, dtype=F64)
    x = _leaf(rng, 2, 3, 4, 4)
    r = rng.normal(size=(2, 8, 4, 4))
    return (lambda: _weighted_fixed(layer(x), r)), _params(layer, x=x)


def case_window_attention(rng) -> Case:
    attn = WindowAttention(4, 2, 2, rng, std=0.5, dtype=F64)
    for lin in (attn.q, attn.k, attn.v, attn.o):
        lin.bias.data[:] = rng.uniform(-0.5, 0.5, size=lin.bias.shape)
    x = _leaf(rng, 2, 4, 4, 4)
    r = rng.normal(size=(2, 4, 4, 4))
    return (lambda: _weighted_fixed(attn(x), r)), _params(attn, x=x)


def case_vision_fan_block(rng) -> Case:
    cfg = VisionFanBlockConfig(channels=8, window_size=2, num_heads=2)
    block = VisionFanBlock(cfg, 4, 4, rng, dtype=F64)
    for p in block.parameters():
        p.data[:] = p.data + rng.uniform(-0.3, 0.3, size=p.shape)
    x = _leaf(rng, 1, 8, 4, 4)
    r = rng.normal(size=(1, 8, 4, 4))
    return (lambda: _weighted_fixed(block(x), r)), _params(block, x=x)


def case_combined_loss(rng) -> Case:
    z = _leaf(rng, 2, 1, 4, 4)
    t = (rng.random((2, 1, 4, 4)) < 0.5).astype(F64)
    cfg = LossConfig(alpha=float(rng.uniform(0.1, 0.9)))
    return (lambda: combined_loss(z, t, cfg)), {"logits": z}


TINY_MODEL = UNetConfig(input_resolution=16, base_channels=4, num_stages=1, window_size=8, num_heads=4)


def case_tiny_model(rng) -> Case:
    model = FanUNet(TINY_MODEL, seed=int(rng.integers(2**31)), dtype=F64)
    x = Tensor(rng.uniform(0, 1, size=(1, 3, 16, 16)), dtype=F64)
    t = (rng.random((1, 1, 16, 16)) < 0.4).astype(F64)
    return (lambda: combined_loss(model(x), t)), _params(model)


@dataclass
class CheckSpec:
    name: str
    build: Callable[[np.random.Generator], Case]
    tol: float = 1e-5
    h: float = 1e-4
    samples: Optional[int] = None


PRIMITIVES: List[CheckSpec] = [
    CheckSpec("add", _binary_case(lambda a, b: a + b, (4,))),
    CheckSpec("sub", _binary_case(lambda a, b: a - b, (1, 4))),
    CheckSpec("mul", _binary_case(lambda a, b: a * b, (3, 1))),
    CheckSpec("div", _binary_case(lambda a, b: a / b, (3, 4), lo_b=0.5)),
    CheckSpec("matmul", case_matmul),
    CheckSpec("batched_matmul", case_batched_matmul),
    CheckSpec("sin", _unary_case(T.sin)),
    CheckSpec("cos", _unary_case(T.cos)),
    CheckSpec("exp", _unary_case(T.exp)),
    CheckSpec("log", _unary_case(T.log, lo=0.2, hi=2.0)),
    CheckSpec("sigmoid", _unary_case(T.sigmoid)),
    CheckSpec("gelu", _unary_case(T.gelu)),
    CheckSpec("tanh", _unary_case(T.tanh)),
    CheckSpec("softplus", _unary_case(T.softplus)),
    CheckSpec("power", _unary_case(lambda x: x**2)),
    CheckSpec("reductions", case_reductions),
    CheckSpec("shape_ops", case_shapes),
    CheckSpec("softmax", case_softmax),
    CheckSpec("layer_norm", case_layer_norm),
    CheckSpec("group_norm", case_group_norm),
    CheckSpec("conv2d", case_conv2d),
    CheckSpec("conv2d_strided", case_conv2d_strided),
    CheckSpec("maxpool2x2", case_maxpool),
    CheckSpec("bilinear_upsample2x", case_upsample),
    CheckSpec("composite_graph", case_composite),
]

LAYERS: List[CheckSpec] = [
    CheckSpec("fan_series_eval", case_fan_series),
    CheckSpec("fan_layer_1d", case_fan_layer_1d),
    CheckSpec("fan_layer_2d", case_fan_layer_2d),
    CheckSpec("window_attention", case_window_attention),
    CheckSpec("vision_fan_block", case_vision_fan_block),
    CheckSpec("combined_loss", case_combined_loss),
]

# small step keeps maxpool argmax switches out of the difference quotient
FULL_MODEL = CheckSpec("tiny_full_model", case_tiny_model, tol=1e-3, h=1e-6, samples=3)

ALL_CHECKS: List[CheckSpec] = PRIMITIVES + LAYERS + [FULL_MODEL]


@dataclass
class CheckResult:
    name: str
    max_error: float
    tol: float
    seeds: int
    seconds: float

    @property
    def passed(self) -> bool:
        return self.max_error < self.tol


def run_check(spec: CheckSpec, seeds: int = 20, base_seed: int = 0) -> CheckResult:
    start = time.perf_counter()
    worst = 0.0
    for s in range(seeds):
        rng = np.random.default_rng([base_seed, s])
        fn, tensors = spec.build(rng)
        err = check_case(fn, tensors, h=spec.h, samples=spec.samples, rng=rng)
        worst = max(worst, err)
    return CheckResult(spec.name, worst, spec.tol, seeds, time.perf_counter() - start)


def run_suite(seeds: int = 20, names: Optional[List[str]] = None) -> List[CheckResult]:
    specs = [s for s in ALL_CHECKS if names is None or s.name in names]
    return [run_check(s, seeds) for s in specs]

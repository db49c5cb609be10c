"""Sine-wave extrapolation: FAN regressor vs a parameter-matched MLP.

Both models are fit to sin(x) on [-4 pi, 4 pi] with identical full-batch AdamW and
scored on the unseen interval [4 pi, 8 pi].
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Tuple

import numpy as np

from .fan import FANLayer1D
from .nn import Linear, Module
from .optim import AdamW
from .tensor import Tensor, gelu

TRAIN_RANGE = (-4 * np.pi, 4 * np.pi)
OOD_RANGE = (4 * np.pi, 8 * np.pi)


class FanRegressor(Module):
    def __init__(self, d_p: int, d_p_prime: int, rng: np.random.Generator, dtype=np.float64):
        self.fan = FANLayer1D(1, d_p, d_p_prime, rng, dtype=dtype)
        self.out = Linear(self.fan.out_features, 1, rng, dtype=dtype)

    def forward(self, x: Tensor) -> Tensor:
        return self.out(self.fan(x))


class MLPRegressor(Module):
    def __init__(self, hidden: int, rng: np.random.Generator, dtype=np.float64):
        self.hidden = Linear(1, hidden, rng, dtype=dtype)
        self.out = Linear(hidden, 1, rng, dtype=dtype)

    def forward(self, x: Tensor) -> Tensor:
        return self.out(gelu(self.hidden(x)))


def matched_mlp_width(n_params: int) -> int:
    # 1 -> h -> 1 MLP has 3h + 1 scalars
    return max(1, round((n_params - 1) / 3))


@dataclass
class ExtrapolationResult:
    model: str
    params: int
    train_mse: float
    ood_mse: float


def fit_regressor(model: Module, x: np.ndarray, y: np.ndarray, steps: int, lr: float, weight_decay: float = 1e-2) -> float:
    # mild decay damps the spare periodic units that otherwise drift off-frequency
    opt = AdamW(model.parameters(), lr=lr, weight_decay=weight_decay)
    xt, yt = Tensor(x, dtype=np.float64), Tensor(y, dtype=np.float64)
    for _ in range(steps):
        diff = model(xt) - yt
        loss = (diff * diff).mean()
        opt.zero_grad()
        loss.backward()
        opt.step()
    diff = model(xt).data - y
    return float(np.mean(diff**2))


def run_extrapolation(
    seed: int = 0,
    steps: int = 4000,
    lr: float = 1e-2,
    weight_decay: float = 1e-2,
    d_p: int = 8,
    d_p_prime: int = 16,
    n_points: int = 1000,
) -> Tuple[List[ExtrapolationResult], Dict[str, Module]]:
    """Fit both regressors; return their scores and the fitted models keyed "fan" / "mlp"."""
    x = np.linspace(*TRAIN_RANGE, n_points)[:, None]
    x_ood = np.linspace(*OOD_RANGE, n_points)[:, None]
    y, y_ood = np.sin(x), np.sin(x_ood)

    rng = np.random.default_rng(seed)
    fan = FanRegressor(d_p, d_p_prime, rng)
    mlp = MLPRegressor(matched_mlp_width(fan.num_parameters()), rng)
    models = {"fan": fan, "mlp": mlp}
    results = []
    for name, model in models.items():
        train_mse = fit_regressor(model, x, y, steps, lr, weight_decay)
        ood = model(Tensor(x_ood, dtype=np.float64)).data
        results.append(ExtrapolationResult(name, model.num_parameters(), train_mse, float(np.mean((ood - y_ood) ** 2))))
    return results, models


def write_results(results: List[ExtrapolationResult], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["model", "train_mse", "ood_mse"])
        for r in results:
            w.writerow([r.model, repr(r.train_mse), repr(r.ood_mse)])


def read_results(path) -> Dict[str, Dict[str, float]]:
    with open(path, newline="") as fh:
        return {row["model"]: {"train_mse": float(row["train_mse"]), "ood_mse": float(row["ood_mse"])} for row in csv.DictReader(fh)}


def plot_extrapolation(models: Dict[str, Module], path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    grid = np.linspace(TRAIN_RANGE[0], OOD_RANGE[1], 1500)[:, None]
    fig, ax = plt.subplots(figsize=(9, 3.5))
    ax.plot(grid[:, 0], np.sin(grid[:, 0]), "k", lw=1, label="sin(x)")
    for name, model in models.items():
        ax.plot(grid[:, 0], model(Tensor(grid, dtype=np.float64)).data[:, 0], label=name.upper())
    ax.axvspan(*OOD_RANGE, color="0.9", label="extrapolation")
    ax.set_ylim(-2.5, 2.5)
    ax.legend(loc="lower left")
    fig.tight_layout()
    fig.savefig(Path(path), dpi=100)
    plt.close(fig)

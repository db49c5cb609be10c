"""Training loop, run directory management, and checkpoint evaluation."""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np

from .attention import ConfigError
from .checkpoint import load_checkpoint, save_checkpoint
from .data import SegmentationDataset, augment_arrays
from .losses import ConfusionAccumulator, LossConfig, MetricsReport, combined_loss
from .model import FanUNet, UNetConfig
from .optim import AdamW, clip_grad_norm, cosine_lr
from .tensor import Tensor, no_grad

logger = logging.getLogger(__name__)

HISTORY_FIELDS = ["epoch", "train_loss", "val_loss", "miou", "dsc", "acc", "spe", "sen"]


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    epochs: int = 20
    batch_size: int = 8
    lr: float = 1e-3
    min_lr: float = 1e-5
    weight_decay: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    grad_clip: float = 1.0
    seed: int = 0
    alpha: float = 0.5
    epsilon: float = 1e-5
    augment: bool = False
    threshold: float = 0.5
    model: UNetConfig = field(default_factory=UNetConfig)

    def __post_init__(self):
        if isinstance(self.model, dict):
            self.model = UNetConfig.from_dict(self.model)
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError(f"epochs and batch_size must be >= 1, got {self.epochs}, {self.batch_size}")
        if self.lr <= 0:
            raise ConfigError(f"lr must be positive, got {self.lr}")
        LossConfig(self.alpha, self.epsilon)

    @property
    def loss(self) -> LossConfig:
        return LossConfig(self.alpha, self.epsilon)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown training config keys: {unknown}")
        return cls(**d)


@dataclass
class TrainResult:
    model: FanUNet
    history: List[dict]
    best_dsc: float


def evaluate_model(model: FanUNet, dataset: SegmentationDataset, loss_cfg: LossConfig, batch_size: int = 8, threshold: float = 0.5) -> Tuple[float, MetricsReport]:
    """Return (pixel-weighted mean loss, pooled confusion metrics) over the whole split."""
    acc = ConfusionAccumulator(threshold)
    total, weight = 0.0, 0
    with no_grad():
        for batch in dataset.batches(batch_size, dtype=model.dtype):
            logits = model(batch.images)
            n = len(batch)
            total += combined_loss(logits, batch.masks, loss_cfg).item() * n
            weight += n
            acc.update(logits, batch.masks)
    return total / weight, acc.report()


def write_history(path: Path, rows: List[dict]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=HISTORY_FIELDS)
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(float(r[k])) if k != "epoch" else int(r[k])) for k in HISTORY_FIELDS})


def read_history(path) -> List[dict]:
    with open(path, newline="") as fh:
        return [{k: (int(v) if k == "epoch" else float(v)) for k, v in row.items()} for row in csv.DictReader(fh)]


def _checkpoint_tensors(model: FanUNet, opt: Optional[AdamW]) -> dict:
    named = list(model.named_parameters())
    tensors = {f"model.{n}": p.data for n, p in named}
    if opt is not None:
        tensors.update(opt.state_arrays([n for n, _ in named]))
    return tensors


def save_run_checkpoint(path, cfg: TrainConfig, model: FanUNet, opt: Optional[AdamW], state: dict) -> None:
    meta = {"format": "fanunet-checkpoint", "config": cfg.to_dict(), "dtype": model.dtype.name, "state": state}
    save_checkpoint(path, meta, _checkpoint_tensors(model, opt))


def load_model(path) -> Tuple[FanUNet, dict]:
    meta, tensors = load_checkpoint(path)
    cfg = TrainConfig.from_dict(meta["config"])
    model = FanUNet(cfg.model, seed=cfg.seed, dtype=np.dtype(meta.get("dtype", "float32")))
    model.load_state_dict({k[len("model.") :]: v for k, v in tensors.items() if k.startswith("model.")})
    return model, meta


def train(
    cfg: TrainConfig,
    train_set: SegmentationDataset,
    val_set: Optional[SegmentationDataset] = None,
    out_dir=None,
    resume=None,
    stop_after: Optional[int] = None,
    dtype=np.float32,
) -> TrainResult:
    """Train a fresh (or resumed) model.

    ``val_set`` defaults to the training split. ``stop_after`` ends the run early after
    that many total epochs, leaving a resumable ``last.ckpt``; the schedule still
    follows ``cfg.epochs``.
    """
    if len(train_set) == 0:
        raise TrainingError("training dataset is empty")
    if train_set.resolution != cfg.model.input_resolution:
        raise ConfigError(
            f"dataset resolution {train_set.resolution} != model input_resolution {cfg.model.input_resolution}"
        )
    val_set = val_set if val_set is not None else train_set
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True))

    model = FanUNet(cfg.model, seed=cfg.seed, dtype=dtype)
    names = [n for n, _ in model.named_parameters()]
    params = model.parameters()
    opt = AdamW(params, lr=cfg.lr, betas=(cfg.beta1, cfg.beta2), weight_decay=cfg.weight_decay)
    steps_per_epoch = math.ceil(len(train_set) / cfg.batch_size)
    total_steps = cfg.epochs * steps_per_epoch
    history: List[dict] = []
    best_dsc = -1.0
    start_epoch = 1

    if resume is not None:
        meta, tensors = load_checkpoint(resume)
        if meta["config"] != cfg.to_dict():
            raise ConfigError("resume checkpoint was written with a different configuration")
        model.load_state_dict({k[len("model.") :]: v for k, v in tensors.items() if k.startswith("model.")})
        state = meta["state"]
        opt.load_state_arrays(names, tensors, state["step"])
        history = state["history"]
        best_dsc = state["best_dsc"]
        start_epoch = state["epoch"] + 1

    loss_cfg = cfg.loss
    last_epoch = cfg.epochs if stop_after is None else min(cfg.epochs, stop_after)
    for epoch in range(start_epoch, last_epoch + 1):
        running, seen = 0.0, 0
        for b, batch in enumerate(train_set.batches(cfg.batch_size, seed=cfg.seed, epoch=epoch, dtype=dtype)):
            images, masks = batch.images, batch.masks
            if cfg.augment:
                ai, am = augment_arrays(images.data, masks.data, [cfg.seed, epoch, b])
                images, masks = Tensor(ai, dtype=dtype), Tensor(am, dtype=dtype)
            loss = combined_loss(model(images), masks, loss_cfg)
            value = loss.item()
            if not math.isfinite(value):
                raise TrainingError(f"non-finite loss {value} at epoch {epoch}, step {opt.step_count + 1} (batch {batch.ids})")
            opt.zero_grad()
            loss.backward()
            clip_grad_norm(params, cfg.grad_clip)
            opt.step(cosine_lr(opt.step_count, total_steps, cfg.lr, cfg.min_lr))
            running += value * len(batch)
            seen += len(batch)

        val_loss, report = evaluate_model(model, val_set, loss_cfg, cfg.batch_size, cfg.threshold)
        row = {"epoch": epoch, "train_loss": running / seen, "val_loss": val_loss}
        row.update({k: getattr(report, k) for k in ("miou", "dsc", "acc", "spe", "sen")})
        history.append(row)
        logger.info("epoch %d train_loss %.5f val_loss %.5f dsc %.4f", epoch, row["train_loss"], val_loss, report.dsc)

        improved = report.dsc > best_dsc
        best_dsc = max(best_dsc, report.dsc)
        if out is not None:
            write_history(out / "history.csv", history)
            state = {"epoch": epoch, "step": opt.step_count, "best_dsc": best_dsc, "history": history}
            save_run_checkpoint(out / "last.ckpt", cfg, model, opt, state)
            if improved:
                save_run_checkpoint(out / "best.ckpt", cfg, model, None, state)

    return TrainResult(model, history, best_dsc)


def evaluate_run(checkpoint, dataset: SegmentationDataset, batch_size: int = 8) -> MetricsReport:
    model, meta = load_model(checkpoint)
    cfg = TrainConfig.from_dict(meta["config"])
    if dataset.resolution != cfg.model.input_resolution:
        raise ConfigError(
            f"checkpoint expects {cfg.model.input_resolution}px inputs, dataset is {dataset.resolution}px"
        )
    _, report = evaluate_model(model, dataset, cfg.loss, batch_size, cfg.threshold)
    return report

"""Batch-level Dice + cross-entropy loss and confusion-matrix segmentation metrics."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .tensor import ShapeError, Tensor, clip, sigmoid, softplus

LOGIT_CLAMP = 30.0


@dataclass
class LossConfig:
    alpha: float = 0.5
    epsilon: float = 1e-5

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.epsilon <= 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")


def _check_target(logits: Tensor, target) -> np.ndarray:
    t = target.data if isinstance(target, Tensor) else np.asarray(target)
    if t.shape != logits.shape:
        raise ShapeError(f"logits {logits.shape} and target {t.shape} differ in shape")
    if not np.all((t == 0) | (t == 1)):
        raise ValueError("target must be binary (values in {0, 1})")
    return t.astype(logits.dtype, copy=False)


def bce_loss(logits: Tensor, target) -> Tensor:
    """Mean binary cross-entropy over every pixel of the batch."""
    t = _check_target(logits, target)
    z = clip(logits, -LOGIT_CLAMP, LOGIT_CLAMP)
    # -log p = softplus(-z), -log(1-p) = softplus(z)
    per_pixel = softplus(-z) * t + softplus(z) * (1.0 - t)
    return per_pixel.mean()


def dice_loss(logits: Tensor, target, epsilon: float = 1e-5) -> Tensor:
    """1 - 2 sum(p t) / (sum p + sum t + eps), sums pooled over the whole batch."""
    t = _check_target(logits, target)
    p = sigmoid(clip(logits, -LOGIT_CLAMP, LOGIT_CLAMP))
    inter = (p * t).sum()
    denom = p.sum() + float(t.sum()) + epsilon
    return 1.0 - 2.0 * inter / denom


def combined_loss(logits: Tensor, target, cfg: LossConfig = None) -> Tensor:
    cfg = cfg or LossConfig()
    return (1.0 - cfg.alpha) * bce_loss(logits, target) + cfg.alpha * dice_loss(logits, target, cfg.epsilon)


@dataclass
class MetricsReport:
    tp: int
    tn: int
    fp: int
    fn: int
    miou: float
    dsc: float
    acc: float
    spe: float
    sen: float

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn

    def to_dict(self) -> dict:
        return asdict(self)


def _ratio(num: int, den: int) -> float:
    # empty denominator means the class is absent from both prediction and target
    return 1.0 if den == 0 else num / den


def metrics_from_counts(tp: int, tn: int, fp: int, fn: int) -> MetricsReport:
    tp, tn, fp, fn = int(tp), int(tn), int(fp), int(fn)
    total = tp + tn + fp + fn
    iou_fg = _ratio(tp, tp + fp + fn)
    iou_bg = _ratio(tn, tn + fp + fn)
    return MetricsReport(
        tp=tp,
        tn=tn,
        fp=fp,
        fn=fn,
        miou=0.5 * (iou_fg + iou_bg),
        dsc=_ratio(2 * tp, 2 * tp + fp + fn),
        acc=_ratio(tp + tn, total),
        spe=_ratio(tn, tn + fp),
        sen=_ratio(tp, tp + fn),
    )


def confusion_counts(pred: np.ndarray, target: np.ndarray):
    pred = np.asarray(pred).astype(bool)
    target = np.asarray(target).astype(bool)
    tp = int(np.count_nonzero(pred & target))
    fp = int(np.count_nonzero(pred & ~target))
    fn = int(np.count_nonzero(~pred & target))
    tn = pred.size - tp - fp - fn
    return tp, tn, fp, fn


def binarize_logits(logits, threshold: float = 0.5) -> np.ndarray:
    z = logits.data if isinstance(logits, Tensor) else np.asarray(logits)
    z = np.clip(z.astype(np.float64), -LOGIT_CLAMP, LOGIT_CLAMP)
    return 1.0 / (1.0 + np.exp(-z)) > threshold


class ConfusionAccumulator:
    """Running confusion counts across an evaluation split."""

    def __init__(self, threshold: float = 0.5):
        self.threshold = threshold
        self.tp = self.tn = self.fp = self.fn = 0

    def update(self, logits, target) -> None:
        t = target.data if isinstance(target, Tensor) else np.asarray(target)
        pred = binarize_logits(logits, self.threshold)
        if pred.shape != t.shape:
            raise ShapeError(f"prediction {pred.shape} and target {t.shape} differ in shape")
        if not np.all((t == 0) | (t == 1)):
            raise ValueError("target must be binary (values in {0, 1})")
        tp, tn, fp, fn = confusion_counts(pred, t)
        self.tp += tp
        self.tn += tn
        self.fp += fp
        self.fn += fn

    def report(self) -> MetricsReport:
        return metrics_from_counts(self.tp, self.tn, self.fp, self.fn)


def evaluate(pred_logits, target, threshold: float = 0.5) -> MetricsReport:
    acc = ConfusionAccumulator(threshold)
    acc.update(pred_logits, target)
    return acc.report()

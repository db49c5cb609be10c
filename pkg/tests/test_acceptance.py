"""One test per acceptance criterion; each prints a PASS/FAIL line (summarized at session end)."""

import time
from fractions import Fraction

import numpy as np

from conftest import OVERFIT_EPOCHS, record
from fanunet.data import SegmentationDataset, synthetic_dataset
from fanunet.fan import FANLayer2D
from fanunet.fourier import fourier_coefficients, square_wave
from fanunet.gradcheck import run_suite
from fanunet.losses import LossConfig, bce_loss, combined_loss, dice_loss, metrics_from_counts
from fanunet.model import UNetConfig
from fanunet.periodicity import run_extrapolation
from fanunet.tensor import Tensor
from fanunet.trainer import TrainConfig, train
from oracles import dense_attention, per_pixel_oracle
from test_attention import random_attention
from test_losses import loop_oracle, random_case


def test_criterion_01_benchmark_scores_substituted():
    record(
        1,
        True,
        "ISIC17/18 benchmark scores need the full datasets and long training; criteria 2-10 substitute for them",
        status="SUBSTITUTED",
    )


def test_criterion_02_gradient_suite():
    start = time.process_time()
    results = run_suite(seeds=20)
    elapsed = time.process_time() - start
    failed = [f"{r.name}={r.max_error:.2e}" for r in results if not r.passed]
    worst = max(results, key=lambda r: r.max_error / r.tol)
    ok = not failed and elapsed < 120
    record(2, ok, f"{len(results)} checks x 20 seeds, worst {worst.name} {worst.max_error:.1e} (tol {worst.tol:.0e}), {elapsed:.1f}s; failed={failed}")


def test_criterion_03_fourier_oracle():
    square = fourier_coefficients(square_wave, 2 * np.pi, 9)
    odd = np.arange(1, 10, 2)
    square_err = np.abs(square.b[odd - 1] - 4 / (np.pi * odd)).max()
    sine_err = abs(fourier_coefficients(np.sin, 2 * np.pi, 3).b[0] - 1.0)
    record(3, square_err < 1e-3 and sine_err < 1e-6, f"square-wave max err {square_err:.1e} (<1e-3), sine b1 err {sine_err:.1e} (<1e-6)")


def test_criterion_04_fan_extrapolates_sine():
    start = time.process_time()
    results, _ = run_extrapolation(seed=0)
    elapsed = time.process_time() - start
    by = {r.model: r for r in results}
    fan, mlp = by["fan"], by["mlp"]
    ok = fan.params == mlp.params and fan.ood_mse < 0.1 and fan.ood_mse < mlp.ood_mse and elapsed < 180
    record(4, ok, f"OOD MSE fan {fan.ood_mse:.3e} vs mlp {mlp.ood_mse:.3e}, {fan.params} params each, {elapsed:.1f}s")


def test_criterion_05_fan_2d_per_pixel_equivalence():
    worst = 0.0
    for seed in range(50):
        rng = np.random.default_rng(seed)
        layer = FANLayer2D(4, 8, rng, dtype=np.float64)
        x = rng.normal(size=(1, 4, 6, 6))
        worst = max(worst, float(np.abs(layer(Tensor(x, dtype=np.float64)).data - per_pixel_oracle(layer, x)).max()))
    record(5, worst < 1e-6, f"max |2d - per-pixel 1d| = {worst:.1e} over 50 seeds (<1e-6)")


def test_criterion_06_window_attention_dense_oracle():
    worst = 0.0
    for seed in range(20):
        attn = random_attention(seed)
        x = np.random.default_rng(1000 + seed).normal(size=(1, 8, 4, 4))
        got = attn(Tensor(x, dtype=np.float64)).data[0].reshape(8, 16).T
        worst = max(worst, float(np.abs(got - dense_attention(attn, x[0].reshape(8, 16).T)).max()))
    record(6, worst < 1e-5, f"max |windowed - dense| = {worst:.1e} over 20 single-window inputs (<1e-5)")


def test_criterion_07_loss_semantics():
    worst = 0.0
    for seed in range(10):
        logits, target = random_case(seed)
        for alpha in (0.0, 0.25, 0.5, 1.0):
            got = combined_loss(Tensor(logits, dtype=np.float64), target, LossConfig(alpha=alpha)).item()
            worst = max(worst, abs(got - loop_oracle(logits, target, alpha)))

    logits, target = random_case(11)
    z = Tensor(logits, dtype=np.float64)
    endpoint_err = max(
        abs(combined_loss(z, target, LossConfig(alpha=0.0)).item() - bce_loss(z, target).item()),
        abs(combined_loss(z, target, LossConfig(alpha=1.0)).item() - dice_loss(z, target).item()),
    )

    target = np.zeros((2, 1, 4, 4))
    target[1, :, 1:3, 1:3] = 1
    confident = np.where(target > 0, 20.0, -20.0)
    pooled = dice_loss(Tensor(confident, dtype=np.float64), target).item()
    per_sample = np.mean([dice_loss(Tensor(confident[i : i + 1], dtype=np.float64), target[i : i + 1]).item() for i in range(2)])

    ok = worst < 1e-6 and endpoint_err < 1e-12 and pooled < 1e-4 and per_sample > 0.45
    record(7, ok, f"oracle err {worst:.1e} (<1e-6), endpoint err {endpoint_err:.0e}, pooled dice {pooled:.1e} vs per-sample {per_sample:.3f}")


def test_criterion_08_hand_confusion_metrics():
    r = metrics_from_counts(tp=4, tn=9, fp=2, fn=1)
    got = {k: Fraction(getattr(r, k)).limit_denominator(100) for k in ("dsc", "sen", "spe", "acc")}
    want = {"dsc": Fraction(8, 11), "sen": Fraction(4, 5), "spe": Fraction(9, 11), "acc": Fraction(13, 16)}
    exact = r.dsc == 8 / 11 and r.sen == 4 / 5 and r.spe == 9 / 11 and r.acc == 13 / 16
    record(8, got == want and exact, "DSC 8/11, Sen 4/5, Spe 9/11, Acc 13/16 " + ("exact" if exact else f"got {got}"))


def test_criterion_09_end_to_end_overfit(overfit_run, baseline_run):
    def summary(run):
        hist = run["result"].history
        reached = next((h["epoch"] for h in hist if h["dsc"] >= 0.95), None)
        return hist, reached

    hist, reached = summary(overfit_run)
    base_hist, base_reached = summary(baseline_run)
    ok = (
        len(hist) == OVERFIT_EPOCHS
        and reached is not None
        and overfit_run["seconds"] < 600
        and base_reached is not None
        and base_hist[-1]["train_loss"] < 0.5 * base_hist[0]["train_loss"]
    )
    record(
        9,
        ok,
        f"FAN-UNet train DSC>=0.95 at epoch {reached} (best {overfit_run['result'].best_dsc:.4f}, {overfit_run['seconds']:.0f}s); "
        f"pure-conv ablation at epoch {base_reached} (best {baseline_run['result'].best_dsc:.4f}, {baseline_run['seconds']:.0f}s)",
    )


def test_criterion_10_seeded_runs_identical(tmp_path):
    ds = SegmentationDataset.from_samples(synthetic_dataset(6, 32, seed=3))
    cfg = TrainConfig(
        epochs=3,
        batch_size=4,
        seed=5,
        augment=True,
        model=UNetConfig(input_resolution=32, num_stages=2, base_channels=4, window_size=8, num_heads=2),
    )
    for name in ("a", "b"):
        train(cfg, ds, out_dir=tmp_path / name)
    a = (tmp_path / "a" / "history.csv").read_bytes()
    b = (tmp_path / "b" / "history.csv").read_bytes()
    record(10, a == b and a.count(b"\n") == 4, f"history.csv byte-identical across two seeded runs ({len(a)} bytes)")

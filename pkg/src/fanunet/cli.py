"""Command-line entry point: ``fanunet <command> [flags]``.

Exit codes: 0 success, 1 validation error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np
from PIL import Image

from .attention import ConfigError
from .checkpoint import CheckpointError
from .data import DatasetManifest, IngestionError, PairingError, SegmentationDataset, export_dataset, load_image, synthetic_dataset
from .losses import binarize_logits
from .tensor import DomainError, ShapeError, Tensor, no_grad

logger = logging.getLogger("fanunet")

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME = 0, 1, 2
VALIDATION_ERRORS = (ConfigError, IngestionError, PairingError, CheckpointError, ShapeError, DomainError, ValueError, KeyError, FileNotFoundError)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# flag name -> (dotted config key, type)
TRAIN_FLAGS = {
    "epochs": ("epochs", int),
    "batch": ("batch_size", int),
    "lr": ("lr", float),
    "weight_decay": ("weight_decay", float),
    "alpha": ("alpha", float),
    "seed": ("seed", int),
    "resolution": ("model.input_resolution", int),
    "base_channels": ("model.base_channels", int),
    "stages": ("model.num_stages", int),
    "window": ("model.window_size", int),
    "heads": ("model.num_heads", int),
    "blocks": ("model.bottleneck_blocks", int),
}


def _echo(config: dict) -> None:
    print(json.dumps(config, indent=2, sort_keys=True), flush=True)


def resolve_train_config(args) -> dict:
    """Defaults, then the JSON config file, then explicit flags."""
    from .trainer import TrainConfig

    resolved = TrainConfig().to_dict()
    if args.config:
        file_cfg = json.loads(Path(args.config).read_text())
        model_cfg = file_cfg.pop("model", {})
        resolved.update(file_cfg)
        resolved["model"].update(model_cfg)
    for flag, (key, _) in TRAIN_FLAGS.items():
        value = getattr(args, flag)
        if value is None:
            continue
        if key.startswith("model."):
            resolved["model"][key[len("model.") :]] = value
        else:
            resolved[key] = value
    if args.no_fan:
        resolved["model"]["enable_fan_ffn"] = False
    if args.no_attn:
        resolved["model"]["enable_attention"] = False
    if args.no_pos:
        resolved["model"]["enable_positional"] = False
    if args.augment:
        resolved["augment"] = True
    return resolved


def cmd_train(args) -> int:
    from .trainer import TrainConfig, train

    cfg = TrainConfig.from_dict(resolve_train_config(args))
    _echo(cfg.to_dict())
    res = cfg.model.input_resolution
    train_set = SegmentationDataset.from_manifest(DatasetManifest.discover(args.data, "train", res))
    val_set = None
    if (Path(args.data) / "val").is_dir():
        val_set = SegmentationDataset.from_manifest(DatasetManifest.discover(args.data, "val", res))
    result = train(cfg, train_set, val_set, out_dir=args.out, resume=args.resume)
    last = result.history[-1]
    print(f"trained {len(result.history)} epochs; last train_loss={last['train_loss']:.5f} dsc={last['dsc']:.4f}")
    return EXIT_OK


def cmd_eval(args) -> int:
    from .trainer import TrainConfig, evaluate_run
    from .checkpoint import load_checkpoint

    meta, _ = load_checkpoint(args.ckpt)
    cfg = TrainConfig.from_dict(meta["config"])
    _echo({"ckpt": str(args.ckpt), "data": str(args.data), "split": args.split, "config": cfg.to_dict()})
    res = args.resolution or cfg.model.input_resolution
    ds = SegmentationDataset.from_manifest(DatasetManifest.discover(args.data, args.split, res))
    report = evaluate_run(args.ckpt, ds)
    print(json.dumps(report.to_dict(), indent=2))
    return EXIT_OK


def cmd_predict(args) -> int:
    from .trainer import load_model

    model, meta = load_model(args.ckpt)
    res = model.cfg.input_resolution
    _echo({"ckpt": str(args.ckpt), "image": str(args.image), "out": str(args.out), "threshold": args.threshold, "resolution": res})
    image, original = load_image(args.image, res)
    with no_grad():
        logits = model(Tensor(image[None], dtype=model.dtype))
    mask = binarize_logits(logits, args.threshold)[0, 0].astype(np.uint8) * 255
    out = Image.fromarray(mask, "L")
    if args.original_size:
        out = out.resize(original, Image.NEAREST)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    out.save(args.out)
    print(f"wrote {args.out} ({out.size[0]}x{out.size[1]}, foreground {int((np.asarray(out) > 0).sum())} px)")
    return EXIT_OK


def cmd_synth(args) -> int:
    _echo({"out": str(args.out), "n": args.n, "val_n": args.val_n, "resolution": args.resolution, "seed": args.seed})
    export_dataset(synthetic_dataset(args.n, args.resolution, args.seed), args.out, "train")
    if args.val_n:
        export_dataset(synthetic_dataset(args.val_n, args.resolution, args.seed + 1), args.out, "val")
    print(f"wrote {args.n} train / {args.val_n} val samples under {args.out}")
    return EXIT_OK


def cmd_grad_check(args) -> int:
    from .gradcheck import ALL_CHECKS, run_suite

    names = args.only or None
    known = {s.name for s in ALL_CHECKS}
    if names and set(names) - known:
        raise ConfigError(f"unknown checks {sorted(set(names) - known)}; available: {sorted(known)}")
    _echo({"seeds": args.seeds, "only": names})
    results = run_suite(args.seeds, names)
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name:22s} max_rel_err={r.max_error:.3e}  tol={r.tol:.0e}  ({r.seconds:.1f}s)")
    failed = [r.name for r in results if not r.passed]
    if failed:
        print(f"failed: {', '.join(failed)}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_fan_demo(args) -> int:
    from .periodicity import plot_extrapolation, run_extrapolation, write_results

    _echo({"out": str(args.out), "seed": args.seed, "steps": args.steps, "lr": args.lr, "weight_decay": args.weight_decay, "plot": not args.no_plot})
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    results, models = run_extrapolation(seed=args.seed, steps=args.steps, lr=args.lr, weight_decay=args.weight_decay)
    write_results(results, out / "fan_vs_mlp.csv")
    if not args.no_plot:
        plot_extrapolation(models, out / "fan_vs_mlp.png")
    for r in results:
        print(f"{r.model}: params={r.params} train_mse={r.train_mse:.3e} ood_mse={r.ood_mse:.3e}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="fanunet", description="FAN-UNet segmentation toolkit")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    t = sub.add_parser("train", help="train a model on an image/mask folder")
    t.add_argument("--data", required=True, type=Path)
    t.add_argument("--out", required=True, type=Path)
    t.add_argument("--config", type=Path, help="JSON training config; flags override it")
    t.add_argument("--resume", type=Path, help="continue from a last.ckpt")
    for flag, (_, typ) in TRAIN_FLAGS.items():
        t.add_argument("--" + flag.replace("_", "-"), dest=flag, type=typ, default=None)
    t.add_argument("--no-fan", action="store_true", help="drop the FANLayer2D feed-forward")
    t.add_argument("--no-attn", action="store_true", help="drop window self-attention")
    t.add_argument("--no-pos", action="store_true", help="drop the positional embedding")
    t.add_argument("--augment", action="store_true")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="confusion metrics of a checkpoint on a split")
    e.add_argument("--ckpt", required=True, type=Path)
    e.add_argument("--data", required=True, type=Path)
    e.add_argument("--split", default="val")
    e.add_argument("--resolution", type=int, default=None)
    e.set_defaults(func=cmd_eval)

    pr = sub.add_parser("predict", help="write a 0/255 mask for one image")
    pr.add_argument("--ckpt", required=True, type=Path)
    pr.add_argument("--image", required=True, type=Path)
    pr.add_argument("--out", required=True, type=Path)
    pr.add_argument("--threshold", type=float, default=0.5)
    pr.add_argument("--original-size", action="store_true", help="resize the mask back to the source image size")
    pr.set_defaults(func=cmd_predict)

    s = sub.add_parser("synth-data", help="export a synthetic periodic-texture dataset")
    s.add_argument("--out", required=True, type=Path)
    s.add_argument("--n", type=int, default=8)
    s.add_argument("--val-n", type=int, default=0)
    s.add_argument("--resolution", type=int, default=64)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_synth)

    g = sub.add_parser("grad-check", help="finite-difference gradient suite")
    g.add_argument("--seeds", type=int, default=20)
    g.add_argument("--only", nargs="*", default=None)
    g.set_defaults(func=cmd_grad_check)

    f = sub.add_parser("fan-demo", help="FAN vs MLP sine extrapolation")
    f.add_argument("--out", required=True, type=Path)
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--steps", type=int, default=4000)
    f.add_argument("--lr", type=float, default=1e-2)
    f.add_argument("--weight-decay", type=float, default=1e-2)
    f.add_argument("--no-plot", action="store_true")
    f.set_defaults(func=cmd_fan_demo)
    return p


def main(argv: Optional[List[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_VALIDATION
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except VALIDATION_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as exc:  # noqa: BLE001 - surfaced as the runtime exit code
        logger.debug("runtime failure", exc_info=True)
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

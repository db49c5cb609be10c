"""Image/mask ingestion, a synthetic periodic-texture generator, and paired augmentation.

Folder layout::

    <root>/<split>/images/<stem>.png|.jpg
    <root>/<split>/masks/<stem>.png
    <root>/<split>/manifest.csv      (optional; columns image_path,mask_path)
"""

from __future__ import annotations

import csv
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, List, Optional, Sequence, Tuple

import numpy as np
from PIL import Image, UnidentifiedImageError

from .tensor import Tensor

logger = logging.getLogger(__name__)

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")
MASK_THRESHOLD = 127


class IngestionError(RuntimeError):
    """A listed file is missing or cannot be decoded."""


class PairingError(ValueError):
    """Image and mask extents disagree, or a stem has no partner."""


@dataclass
class SegmentationBatch:
    images: Tensor  # [B,3,H,W] in [0,1]
    masks: Tensor  # [B,1,H,W] in {0,1}
    ids: List[str] = field(default_factory=list)

    def __len__(self) -> int:
        return self.images.shape[0]


@dataclass
class DatasetManifest:
    root: Path
    split: str
    pairs: List[Tuple[Path, Path]]
    resolution: int = 256

    @classmethod
    def discover(cls, root, split: str = "train", resolution: int = 256) -> "DatasetManifest":
        root = Path(root)
        base = root / split
        csv_path = base / "manifest.csv"
        if csv_path.exists():
            pairs = []
            with open(csv_path, newline="") as fh:
                for row in csv.DictReader(fh):
                    img, msk = Path(row["image_path"]), Path(row["mask_path"])
                    pairs.append((img if img.is_absolute() else base / img, msk if msk.is_absolute() else base / msk))
            return cls(root, split, pairs, resolution)

        img_dir, mask_dir = base / "images", base / "masks"
        if not img_dir.is_dir() or not mask_dir.is_dir():
            raise IngestionError(f"expected {img_dir} and {mask_dir} directories")
        masks = {p.stem: p for p in sorted(mask_dir.iterdir()) if p.suffix.lower() == ".png"}
        pairs = []
        for img in sorted(img_dir.iterdir()):
            if img.suffix.lower() not in IMAGE_SUFFIXES:
                continue
            if img.stem not in masks:
                raise PairingError(f"no mask for image {img} (looked for {mask_dir / (img.stem + '.png')})")
            pairs.append((img, masks[img.stem]))
        if not pairs:
            raise IngestionError(f"no images found under {img_dir}")
        return cls(root, split, pairs, resolution)

    def validate(self) -> None:
        for img, msk in self.pairs:
            for p in (img, msk):
                if not Path(p).is_file():
                    raise IngestionError(f"missing file: {p}")


def _open(path: Path, mode: str) -> Image.Image:
    try:
        with Image.open(path) as im:
            return im.convert(mode)
    except FileNotFoundError:
        raise IngestionError(f"missing file: {path}") from None
    except (UnidentifiedImageError, OSError) as exc:
        raise IngestionError(f"cannot decode {path}: {exc}") from None


def binarize_mask(mask_u8: np.ndarray) -> np.ndarray:
    return (np.asarray(mask_u8) > MASK_THRESHOLD).astype(np.float32)


def _image_array(img: Image.Image, resolution: int, standardize: bool) -> np.ndarray:
    img = img.resize((resolution, resolution), Image.BILINEAR)
    x = np.asarray(img, dtype=np.float32).transpose(2, 0, 1) / 255.0
    if standardize:
        x = (x - x.mean(axis=(1, 2), keepdims=True)) / (x.std(axis=(1, 2), keepdims=True) + 1e-6)
    return np.ascontiguousarray(x)


def load_image(path, resolution: int, standardize: bool = False) -> Tuple[np.ndarray, Tuple[int, int]]:
    """Decode an RGB image to [3,R,R] float32 in [0,1]; also return its original (width, height)."""
    img = _open(Path(path), "RGB")
    return _image_array(img, resolution, standardize), img.size


def load_pair(image_path, mask_path, resolution: int, standardize: bool = False) -> Tuple[np.ndarray, np.ndarray]:
    """Decode one pair into ([3,R,R] float32 in [0,1], [1,R,R] float32 in {0,1})."""
    img = _open(Path(image_path), "RGB")
    msk = _open(Path(mask_path), "L")
    if img.size != msk.size:
        raise PairingError(f"image {image_path} is {img.size} but mask {mask_path} is {msk.size}")
    msk = msk.resize((resolution, resolution), Image.NEAREST)
    return _image_array(img, resolution, standardize), binarize_mask(np.asarray(msk))[None]


class SegmentationDataset:
    """In-memory image/mask arrays with seeded batch iteration."""

    def __init__(self, images: np.ndarray, masks: np.ndarray, ids: Sequence[str]):
        if images.ndim != 4 or masks.ndim != 4 or images.shape[0] != masks.shape[0]:
            raise PairingError(f"images {images.shape} and masks {masks.shape} are not paired")
        if images.shape[2:] != masks.shape[2:]:
            raise PairingError(f"image extents {images.shape[2:]} != mask extents {masks.shape[2:]}")
        self.images = np.ascontiguousarray(images, dtype=np.float32)
        self.masks = np.ascontiguousarray(masks, dtype=np.float32)
        self.ids = list(ids)

    def __len__(self) -> int:
        return self.images.shape[0]

    @property
    def resolution(self) -> int:
        return self.images.shape[-1]

    @classmethod
    def from_manifest(cls, manifest: DatasetManifest, standardize: bool = False, workers: int = 4) -> "SegmentationDataset":
        manifest.validate()
        res = manifest.resolution
        # map() keeps manifest order whatever the completion order
        with ThreadPoolExecutor(max_workers=workers) as pool:
            loaded = list(pool.map(lambda pr: load_pair(pr[0], pr[1], res, standardize), manifest.pairs))
        images = np.stack([x for x, _ in loaded])
        masks = np.stack([m for _, m in loaded])
        ids = [Path(img).stem for img, _ in manifest.pairs]
        logger.info("loaded %d samples from %s/%s at %d px", len(ids), manifest.root, manifest.split, res)
        return cls(images, masks, ids)

    @classmethod
    def from_samples(cls, samples, ids: Optional[Sequence[str]] = None) -> "SegmentationDataset":
        images = np.stack([x for x, _ in samples])
        masks = np.stack([m for _, m in samples])
        ids = list(ids) if ids is not None else [f"sample_{i:04d}" for i in range(len(samples))]
        return cls(images, masks, ids)

    def order(self, seed: Optional[int], epoch: int = 0) -> np.ndarray:
        if seed is None:
            return np.arange(len(self))
        return np.random.default_rng([seed, epoch]).permutation(len(self))

    def batches(self, batch_size: int, seed: Optional[int] = None, epoch: int = 0, dtype=np.float32) -> Iterator[SegmentationBatch]:
        idx = self.order(seed, epoch)
        for start in range(0, len(idx), batch_size):
            sel = idx[start : start + batch_size]
            yield SegmentationBatch(
                Tensor(self.images[sel], dtype=dtype),
                Tensor(self.masks[sel], dtype=dtype),
                [self.ids[i] for i in sel],
            )


def load_dataset(manifest: DatasetManifest, batch_size: int = 8, shuffle_seed: Optional[int] = None) -> Iterator[SegmentationBatch]:
    return SegmentationDataset.from_manifest(manifest).batches(batch_size, shuffle_seed)


def _texture(rng: np.random.Generator, yy: np.ndarray, xx: np.ndarray, cycles: Tuple[float, float]) -> np.ndarray:
    freq = rng.uniform(*cycles)
    theta = rng.uniform(0, np.pi)
    phase = rng.uniform(0, 2 * np.pi)
    return np.sin(2 * np.pi * freq * (xx * np.cos(theta) + yy * np.sin(theta)) + phase)


def synthetic_sample(rng: np.random.Generator, resolution: int) -> Tuple[np.ndarray, np.ndarray]:
    R = resolution
    yy, xx = np.mgrid[0:R, 0:R].astype(np.float64) / R

    frac = rng.uniform(0.08, 0.30)
    aspect = rng.uniform(0.6, 1.6)
    a = np.sqrt(frac / (np.pi * aspect))
    b = aspect * a
    reach = max(a, b)
    cy, cx = rng.uniform(reach, 1.0 - reach, size=2)
    ang = rng.uniform(0, np.pi)
    dy, dx = yy + 0.5 / R - cy, xx + 0.5 / R - cx
    u = dx * np.cos(ang) + dy * np.sin(ang)
    v = -dx * np.sin(ang) + dy * np.cos(ang)
    mask = ((u / a) ** 2 + (v / b) ** 2 <= 1.0).astype(np.float32)

    bg_tex = _texture(rng, yy, xx, (2.0, 5.0))
    fg_tex = _texture(rng, yy, xx, (10.0, 16.0))
    bg_col = rng.uniform(0.55, 0.85, size=3)[:, None, None]
    fg_col = rng.uniform(0.15, 0.45, size=3)[:, None, None]
    image = np.where(mask[None] > 0, fg_col + 0.15 * fg_tex, bg_col + 0.15 * bg_tex)
    image = np.clip(image, 0.0, 1.0).astype(np.float32)
    return image, mask[None]


def synthetic_dataset(n: int, resolution: int = 64, seed: int = 0) -> List[Tuple[np.ndarray, np.ndarray]]:
    """``n`` (image [3,R,R], mask [1,R,R]) pairs: wavy background, textured elliptical lesion."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if resolution < 32:
        raise ValueError(f"resolution must be >= 32, got {resolution}")
    rng = np.random.default_rng(seed)
    return [synthetic_sample(rng, resolution) for _ in range(n)]


def export_dataset(samples, root, split: str = "train", prefix: str = "synth") -> DatasetManifest:
    """Write pairs as 8-bit PNGs in the folder layout ``load_dataset`` reads."""
    base = Path(root) / split
    (base / "images").mkdir(parents=True, exist_ok=True)
    (base / "masks").mkdir(parents=True, exist_ok=True)
    pairs = []
    for i, (img, msk) in enumerate(samples):
        stem = f"{prefix}_{i:04d}"
        ip, mp = base / "images" / f"{stem}.png", base / "masks" / f"{stem}.png"
        Image.fromarray(np.round(img.transpose(1, 2, 0) * 255).astype(np.uint8), "RGB").save(ip)
        Image.fromarray((msk[0] > 0.5).astype(np.uint8) * 255, "L").save(mp)
        pairs.append((ip, mp))
    return DatasetManifest(Path(root), split, pairs, samples[0][0].shape[-1])


def augment_arrays(images: np.ndarray, masks: np.ndarray, seed) -> Tuple[np.ndarray, np.ndarray]:
    """Random flips and 90-degree rotations, identical for each image and its mask."""
    rng = np.random.default_rng(seed)
    out_i, out_m = [], []
    for img, msk in zip(images, masks):
        hflip, vflip = rng.random(2) < 0.5
        k = int(rng.integers(0, 4))
        pair = []
        for arr in (img, msk):
            if hflip:
                arr = arr[:, :, ::-1]
            if vflip:
                arr = arr[:, ::-1, :]
            if k and arr.shape[1] == arr.shape[2]:
                arr = np.rot90(arr, k, axes=(1, 2))
            pair.append(np.ascontiguousarray(arr))
        out_i.append(pair[0])
        out_m.append(pair[1])
    return np.stack(out_i), np.stack(out_m)


def augment(batch: SegmentationBatch, seed) -> SegmentationBatch:
    images, masks = augment_arrays(batch.images.data, batch.masks.data, seed)
    return SegmentationBatch(Tensor(images, dtype=batch.images.dtype), Tensor(masks, dtype=batch.masks.dtype), list(batch.ids))

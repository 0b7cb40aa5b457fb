"""Seeded image batches from a manifest."""

from __future__ import annotations

import logging
import math
from pathlib import Path
from typing import Sequence

import numpy as np
import torch
from PIL import Image

from .detectors import IngestionError, open_image
from .manifest import ManifestError, ManifestRecord, read_manifest

log = logging.getLogger(__name__)

ROTATION_DEG = 10.0
TRANSLATION = 0.05
ZOOM = (0.9, 1.1)


def decode(path: Path, image_size: int) -> np.ndarray:
    """uint8 array (S, S, 3)."""
    image = open_image(path)
    if image.size != (image_size, image_size):
        image = image.resize((image_size, image_size), Image.BILINEAR)
    return np.asarray(image, dtype=np.uint8)


def random_affine(pixels: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Random rotation, translation and zoom about the image centre."""
    size = pixels.shape[0]
    angle = math.radians(rng.uniform(-ROTATION_DEG, ROTATION_DEG))
    tx, ty = rng.uniform(-TRANSLATION, TRANSLATION, size=2) * size
    zoom = rng.uniform(*ZOOM)
    c = (size - 1) / 2.0
    # PIL wants the inverse map: output pixel -> input pixel
    cos, sin = math.cos(angle) / zoom, math.sin(angle) / zoom
    a, b = cos, sin
    d, e = -sin, cos
    cx, cy = c + tx, c + ty
    coeffs = (a, b, c - a * cx - b * cy, d, e, c - d * cx - e * cy)
    out = Image.fromarray(pixels).transform((size, size), Image.AFFINE, coeffs, resample=Image.BILINEAR)
    return np.asarray(out, dtype=np.uint8)


def to_tensor(stack: np.ndarray) -> torch.Tensor:
    """uint8 (B, S, S, 3) -> float32 (B, 3, S, S) in [-1, 1]."""
    return torch.from_numpy(stack).permute(0, 3, 1, 2).float().div(127.5).sub(1.0).contiguous()


def _resolve(manifest) -> tuple[list[ManifestRecord], Path]:
    if isinstance(manifest, (str, Path)):
        return read_manifest(manifest), Path(manifest).parent
    return list(manifest), Path(".")


class ManifestLoader:
    """Decodes a manifest once, then serves shuffled epochs.

    Each call to ``iter()`` is one epoch: a seeded permutation of every
    record, cut into batches (the last one may be short unless
    ``drop_last``). Unreadable files are skipped with a warning.
    """

    def __init__(self, manifest, batch_size: int, image_size: int, augment: bool = False, seed: int = 0,
                 shuffle: bool = True, drop_last: bool = False, root: str | Path | None = None):
        records, base = _resolve(manifest)
        if root is not None:
            base = Path(root)
        if not records:
            raise ManifestError("manifest is empty")
        if batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        pixels, labels = [], []
        for rec in records:
            try:
                pixels.append(decode(base / rec.path, image_size))
            except IngestionError as exc:
                log.warning("skipping record: %s", exc)
                continue
            labels.append(int(rec.label))
        if not pixels:
            raise ManifestError("no readable images in manifest")
        self.pixels = np.stack(pixels)
        self.labels = np.asarray(labels, dtype=np.int64)
        self.batch_size = batch_size
        self.image_size = image_size
        self.augment = augment
        self.shuffle = shuffle
        self.drop_last = drop_last
        self.seed = seed
        self._rng = np.random.default_rng(seed)

    def __len__(self):
        n = len(self.labels)
        return n // self.batch_size if self.drop_last else math.ceil(n / self.batch_size)

    @property
    def label_ids(self) -> tuple[int, ...]:
        return tuple(sorted(set(self.labels.tolist())))

    def batch(self, indices: Sequence[int]) -> tuple[torch.Tensor, torch.Tensor]:
        idx = np.asarray(indices, dtype=np.int64)
        stack = self.pixels[idx]
        if self.augment:
            stack = np.stack([random_affine(p, self._rng) for p in stack])
        return to_tensor(stack), torch.from_numpy(self.labels[idx].copy())

    def __iter__(self):
        n = len(self.labels)
        order = self._rng.permutation(n) if self.shuffle else np.arange(n)
        stop = n - n % self.batch_size if self.drop_last else n
        for start in range(0, stop, self.batch_size):
            yield self.batch(order[start:start + self.batch_size])


def load_batch(manifest, batch_size: int, image_size: int, augment: bool = False,
               rng: np.random.Generator | None = None, root: str | Path | None = None):
    """One batch of ``batch_size`` distinct records.

    With ``rng`` the records are a random draw (and augmentation, if enabled,
    uses the same generator); without it the first records are taken in order.
    """
    records, base = _resolve(manifest)
    if root is not None:
        base = Path(root)
    if not records:
        raise ManifestError("manifest is empty")
    order = rng.permutation(len(records)) if rng is not None else np.arange(len(records))
    pixels, labels = [], []
    for i in order:
        if len(pixels) == batch_size:
            break
        rec = records[i]
        try:
            pixels.append(decode(base / rec.path, image_size))
        except IngestionError as exc:
            log.warning("skipping record: %s", exc)
            continue
        labels.append(int(rec.label))
    if not pixels:
        raise ManifestError("no readable images in manifest")
    stack = np.stack(pixels)
    if augment:
        aug_rng = rng if rng is not None else np.random.default_rng(0)
        stack = np.stack([random_affine(p, aug_rng) for p in stack])
    return to_tensor(stack), torch.tensor(labels, dtype=torch.long)


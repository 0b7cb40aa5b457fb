"""Tiny geometric stand-in for a facial-expression dataset.

Every image is a light disk ("face") on a darker background with per-image
tone and noise. Anger adds a dark bar across the upper half, happiness a
bright bar across the lower half; neutral images carry neither.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

from ..emotion_space import EmotionLabel
from .manifest import ManifestRecord, write_manifest

SYNTHETIC_LABELS = (EmotionLabel.ANGER, EmotionLabel.HAPPINESS, EmotionLabel.NEUTRAL)


def render(label: EmotionLabel, size: int, rng: np.random.Generator) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    c = (size - 1) / 2.0
    r = size * rng.uniform(0.38, 0.46)
    face = ((yy - c) ** 2 + (xx - c) ** 2) <= r ** 2
    skin = rng.uniform(140, 200) * np.array([1.0, 0.85, 0.75])
    img = np.empty((size, size, 3))
    img[:] = rng.uniform(20, 60)
    img[face] = skin
    band = max(1, size // 8)
    if label is EmotionLabel.ANGER:
        row = int(round(size * 0.3))
        img[row:row + band, size // 4: size - size // 4] = rng.uniform(0, 30)
    elif label is EmotionLabel.HAPPINESS:
        row = int(round(size * 0.65))
        img[row:row + band, size // 4: size - size // 4] = rng.uniform(235, 255)
    img += rng.normal(0, 6, img.shape)
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


def make_synthetic_dataset(root: str | Path, n_images: int = 600, image_size: int = 16,
                           seed: int = 0) -> Path:
    """Write balanced PNGs plus ``manifest.csv`` under ``root``; returns the manifest path."""
    root = Path(root)
    (root / "images").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    records = []
    for i in range(n_images):
        label = SYNTHETIC_LABELS[i % len(SYNTHETIC_LABELS)]
        rel = f"images/{i:05d}_{label.label_name}.png"
        Image.fromarray(render(label, image_size, rng)).save(root / rel)
        records.append(ManifestRecord(rel, label))
    manifest = root / "manifest.csv"
    write_manifest(records, manifest)
    return manifest

"""How gradually classifier confidence rises along an intensity sweep."""

from __future__ import annotations

import numpy as np
import torch

from ..emotion_space import DirectionTable, EmotionLabel
from .fed import MetricError

STEPS = 10
# j / 10 rather than 0.1 * j keeps the values exact decimals (0.3, not 0.30000000000000004)
INTENSITIES = tuple(j / 10 for j in range(1, STEPS + 1))
DEGENERATE_RANGE = 1e-6


def series_smoothness(series) -> float:
    """Largest step-to-step change divided by the series range.

    Lies in [1/9, 1] for 10 steps; a flat series scores 1.0 by convention.
    """
    s = np.asarray(series, dtype=np.float64)
    if s.shape != (STEPS,):
        raise MetricError(f"expected {STEPS} confidence values, got shape {s.shape}")
    span = s.max() - s.min()
    if span < DEGENERATE_RANGE:
        return 1.0
    return float(np.abs(np.diff(s)).max() / span)


@torch.no_grad()
def confidence_series(G, table: DirectionTable, classifier, images: torch.Tensor,
                      emotion: EmotionLabel) -> np.ndarray:
    """``(N, 10)`` classifier probability of ``emotion`` along its direction."""
    theta = table.direction(emotion)
    out = np.empty((len(images), STEPS))
    for j, rho in enumerate(INTENSITIES):
        xy = torch.tensor([[rho * np.cos(theta), rho * np.sin(theta)]], dtype=images.dtype)
        generated = G(images, xy.expand(len(images), 2))
        out[:, j] = np.asarray(classifier.classify(generated))[:, int(emotion)]
    return out


def smoothness_score(G, table: DirectionTable, classifier, neutral_images: torch.Tensor,
                     emotion: EmotionLabel) -> float:
    emotion = EmotionLabel.parse(emotion)
    if emotion is EmotionLabel.NEUTRAL:
        raise MetricError("smoothness is undefined for neutral")
    if len(neutral_images) == 0:
        raise MetricError("no neutral images")
    series = confidence_series(G, table, classifier, neutral_images, emotion)
    return float(np.mean([series_smoothness(row) for row in series]))


def smoothness_by_emotion(G, table, classifier, neutral_images) -> dict[EmotionLabel, float]:
    return {label: smoothness_score(G, table, classifier, neutral_images, label) for label in table.labels}


def average_smoothness(G, table, classifier, neutral_images) -> float:
    return float(np.mean(list(smoothness_by_emotion(G, table, classifier, neutral_images).values())))

"""Frechet distance between Gaussian fits of classifier features."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .classifier import EmotionClassifier, extract_in_batches

REGULARIZATION = 1e-6


class MetricError(ValueError):
    pass


@dataclass(frozen=True)
class FeatureStats:
    mean: np.ndarray
    covariance: np.ndarray
    n: int

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


def feature_stats(features) -> FeatureStats:
    """Sample mean and unbiased, symmetrized covariance of an ``(n, d)`` array."""
    x = np.asarray(features, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2 or x.shape[1] < 1:
        raise MetricError(f"features must be (n, d), got shape {x.shape}")
    if x.shape[0] < 2:
        raise MetricError("need at least 2 samples for a covariance")
    mean = x.mean(axis=0)
    centred = x - mean
    cov = centred.T @ centred / (x.shape[0] - 1)
    return FeatureStats(mean, (cov + cov.T) / 2.0, x.shape[0])


def _psd_sqrt(m: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(m)
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T


def _trace_sqrt_product(a: np.ndarray, b: np.ndarray) -> float:
    # Tr((A B)^1/2) == Tr((A^1/2 B A^1/2)^1/2) for PSD A, B; the right side is symmetric
    root_a = _psd_sqrt(a)
    m = root_a @ b @ root_a
    w = np.linalg.eigvalsh((m + m.T) / 2.0)
    return float(np.sqrt(np.clip(w, 0.0, None)).sum())


def frechet_distance(a: FeatureStats, b: FeatureStats) -> float:
    """``||mu_a - mu_b||^2 + Tr(S_a + S_b - 2 (S_a S_b)^1/2)``, clamped at 0."""
    if a.dim != b.dim:
        raise MetricError(f"feature dimensions differ: {a.dim} vs {b.dim}")
    ca, cb = a.covariance, b.covariance
    try:
        tr_sqrt = _trace_sqrt_product(ca, cb)
    except np.linalg.LinAlgError:
        eye = np.eye(a.dim) * REGULARIZATION
        ca, cb = ca + eye, cb + eye
        tr_sqrt = _trace_sqrt_product(ca, cb)
    diff = a.mean - b.mean
    value = float(diff @ diff) + float(np.trace(ca) + np.trace(cb)) - 2.0 * tr_sqrt
    return max(value, 0.0)


def fed_score(classifier: EmotionClassifier, real_images, generated_images, batch_size: int = 64) -> float:
    if len(real_images) < 2 or len(generated_images) < 2:
        raise MetricError("FED needs at least 2 real and 2 generated images")
    real = feature_stats(extract_in_batches(classifier.extract_features, real_images, batch_size))
    fake = feature_stats(extract_in_batches(classifier.extract_features, generated_images, batch_size))
    return frechet_distance(real, fake)

"""Real-vs-fake F1 of the critic's realness score."""

from __future__ import annotations

import numpy as np
import torch

from .fed import MetricError


def f1(precision: float, recall: float) -> float:
    return 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)


def f1_report(real_scores, fake_scores, threshold: float) -> dict:
    """Per-class and macro F1 when samples scoring above ``threshold`` are called real."""
    real = np.asarray(real_scores, dtype=np.float64)
    fake = np.asarray(fake_scores, dtype=np.float64)
    tp_real = int((real > threshold).sum())   # real called real
    fp_real = int((fake > threshold).sum())   # fake called real
    tp_fake = len(fake) - fp_real
    fp_fake = len(real) - tp_real

    def prf(tp, fp, n_true):
        p = tp / (tp + fp) if tp + fp else 0.0
        r = tp / n_true if n_true else 0.0
        return p, r, f1(p, r)

    p_r, r_r, f_r = prf(tp_real, fp_real, len(real))
    p_f, r_f, f_f = prf(tp_fake, fp_fake, len(fake))
    return {
        "f1_real": f_r, "f1_fake": f_f, "f1_average": (f_r + f_f) / 2,
        "precision_real": p_r, "recall_real": r_r,
        "precision_fake": p_f, "recall_fake": r_f,
        "threshold": float(threshold),
    }


def _split(n: int, fraction: float, rng: np.random.Generator):
    n_cal = max(1, int(round(fraction * n)))
    if n - n_cal < 1:
        raise MetricError(f"a set of {n} leaves nothing to score after calibration")
    order = rng.permutation(n)
    return order[:n_cal], order[n_cal:]


def f1_from_scores(real_scores, fake_scores, calibration_fraction: float = 0.2,
                   rng: np.random.Generator | None = None) -> dict:
    """Calibrate the threshold on a held-out split, score the rest.

    The threshold is the midpoint of the mean real and mean fake scores on the
    calibration split.
    """
    if not 0.0 < calibration_fraction < 1.0:
        raise MetricError("calibration_fraction must lie in (0, 1)")
    real = np.asarray(real_scores, dtype=np.float64)
    fake = np.asarray(fake_scores, dtype=np.float64)
    if len(real) == 0 or len(fake) == 0:
        raise MetricError("both real and generated sets must be non-empty")
    rng = rng if rng is not None else np.random.default_rng(0)
    cal_r, eval_r = _split(len(real), calibration_fraction, rng)
    cal_f, eval_f = _split(len(fake), calibration_fraction, rng)
    threshold = (real[cal_r].mean() + fake[cal_f].mean()) / 2.0
    report = f1_report(real[eval_r], fake[eval_f], threshold)
    report.update(n_real=int(len(eval_r)), n_generated=int(len(eval_f)))
    return report


@torch.no_grad()
def critic_scores(D, images: torch.Tensor, batch_size: int = 64) -> np.ndarray:
    return np.concatenate([D(images[i:i + batch_size]).src.double().numpy()
                           for i in range(0, len(images), batch_size)])


def discriminator_f1(D, real_images, generated_images, calibration_fraction: float = 0.2,
                     rng: np.random.Generator | None = None) -> dict:
    return f1_from_scores(critic_scores(D, real_images), critic_scores(D, generated_images),
                          calibration_fraction, rng)

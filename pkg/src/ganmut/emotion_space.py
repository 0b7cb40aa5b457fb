"""Polar conditional space for expression synthesis.

A condition is a point ``(theta, rho)`` on the unit disk: ``theta`` selects the
emotion direction, ``rho`` its intensity. Every non-neutral label owns a
learnable direction; codes whose radius falls below the neutral threshold are
read as neutral.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
import torch
from torch import nn

TWO_PI = 2.0 * math.pi
DEFAULT_THRESHOLD = 0.2
# Below this radius the angle carries no information and is pinned to 0.
ORIGIN_RADIUS = 1e-9
_TIE_TOL = 1e-12


class EmotionSpaceError(ValueError):
    pass


class EmotionLabel(enum.IntEnum):
    ANGER = 0
    DISGUST = 1
    FEAR = 2
    HAPPINESS = 3
    NEUTRAL = 4
    SADNESS = 5
    SURPRISE = 6

    @classmethod
    def parse(cls, value: "str | int | EmotionLabel") -> "EmotionLabel":
        """Accept a label id, a label, or a case-insensitive name."""
        if isinstance(value, str):
            key = value.strip().upper()
            if key.isdigit():
                return cls.parse(int(key))
            try:
                return cls[key]
            except KeyError:
                raise EmotionSpaceError(f"unknown emotion name {value!r}") from None
        try:
            return cls(int(value))
        except ValueError:
            raise EmotionSpaceError(f"unknown emotion id {value!r}") from None

    @property
    def label_name(self) -> str:
        return self.name.lower()


NUM_LABELS = len(EmotionLabel)
NON_NEUTRAL = tuple(label for label in EmotionLabel if label is not EmotionLabel.NEUTRAL)


def wrap_angle(theta: float) -> float:
    wrapped = theta % TWO_PI
    # -1e-17 % 2pi rounds to exactly 2pi
    return 0.0 if wrapped >= TWO_PI else wrapped


@dataclass(frozen=True)
class EmotionCode:
    theta: float
    rho: float

    def __post_init__(self):
        if not (math.isfinite(self.theta) and math.isfinite(self.rho)):
            raise EmotionSpaceError(f"non-finite code ({self.theta}, {self.rho})")
        if not 0.0 <= self.theta < TWO_PI:
            raise EmotionSpaceError(f"theta {self.theta} outside [0, 2pi)")
        if not 0.0 <= self.rho <= 1.0:
            raise EmotionSpaceError(f"rho {self.rho} outside [0, 1]")

    @property
    def xy(self) -> tuple[float, float]:
        return polar_to_cartesian(self)


def normalize_code(theta: float, rho: float) -> tuple[EmotionCode, bool]:
    """Wrap ``theta`` into [0, 2pi) and clamp ``rho`` into [0, 1].

    Returns:
        The normalized code and whether ``rho`` had to be clamped.
    """
    theta, rho = float(theta), float(rho)
    if not (math.isfinite(theta) and math.isfinite(rho)):
        raise EmotionSpaceError(f"non-finite input ({theta}, {rho})")
    clamped_rho = min(max(rho, 0.0), 1.0)
    return EmotionCode(wrap_angle(theta), clamped_rho), clamped_rho != rho


def polar_to_cartesian(code: EmotionCode) -> tuple[float, float]:
    return code.rho * math.cos(code.theta), code.rho * math.sin(code.theta)


def cartesian_to_polar(x: float, y: float) -> EmotionCode:
    x, y = float(x), float(y)
    if not (math.isfinite(x) and math.isfinite(y)):
        raise EmotionSpaceError(f"non-finite input ({x}, {y})")
    rho = math.hypot(x, y)
    if rho < ORIGIN_RADIUS:
        return EmotionCode(0.0, rho)
    return EmotionCode(wrap_angle(math.atan2(y, x)), min(rho, 1.0))


def angular_distance(a: float, b: float) -> float:
    d = abs(a - b) % TWO_PI
    return min(d, TWO_PI - d)


class DirectionTable(nn.Module):
    """Learnable angle per non-neutral label plus the neutral threshold.

    ``angles[i]`` is the direction of ``labels[i]``; ``labels`` is sorted by id
    and never contains neutral.
    """

    def __init__(self, labels: Sequence[EmotionLabel], angles: Sequence[float],
                 threshold: float = DEFAULT_THRESHOLD):
        super().__init__()
        if not 0.0 < threshold < 1.0:
            raise EmotionSpaceError(f"neutral threshold {threshold} outside (0, 1)")
        labels = [EmotionLabel(lbl) for lbl in labels]
        if EmotionLabel.NEUTRAL in labels:
            raise EmotionSpaceError("neutral has no direction")
        if len(labels) != len(angles) or not labels:
            raise EmotionSpaceError("need one angle per non-neutral label")
        if labels != sorted(set(labels)):
            raise EmotionSpaceError("labels must be unique and sorted by id")
        self.labels = tuple(labels)
        self.threshold = float(threshold)
        self.angles = nn.Parameter(torch.tensor([wrap_angle(a) for a in angles], dtype=torch.float64))
        self.register_buffer("_label_ids", torch.tensor([int(l) for l in self.labels], dtype=torch.long),
                             persistent=False)

    @property
    def num_directions(self) -> int:
        return len(self.labels)

    def index_of(self, label: EmotionLabel) -> int:
        try:
            return self.labels.index(EmotionLabel(label))
        except ValueError:
            raise EmotionSpaceError(f"label {label!r} has no direction in this table") from None

    def direction(self, label: EmotionLabel) -> float:
        return float(self.angles[self.index_of(label)].detach())

    def directions(self) -> dict[EmotionLabel, float]:
        values = self.angles.detach().tolist()
        return dict(zip(self.labels, values))

    def knows(self, label: EmotionLabel) -> bool:
        return label is EmotionLabel.NEUTRAL or label in self.labels

    @torch.no_grad()
    def wrap_(self) -> None:
        self.angles.copy_(torch.remainder(self.angles, TWO_PI))
        # remainder can land exactly on 2pi for tiny negative inputs
        self.angles.masked_fill_(self.angles >= TWO_PI, 0.0)

    def extra_repr(self) -> str:
        return f"labels={[l.label_name for l in self.labels]}, threshold={self.threshold}"


def init_directions(labels: Iterable[EmotionLabel] = tuple(EmotionLabel),
                    threshold: float = DEFAULT_THRESHOLD) -> DirectionTable:
    """Equally spaced directions, the i-th non-neutral label (by id) at 2*pi*i/(M-1)."""
    labels = [EmotionLabel(lbl) for lbl in labels]
    if len(set(labels)) != len(labels):
        raise EmotionSpaceError("duplicate labels")
    if EmotionLabel.NEUTRAL not in labels:
        raise EmotionSpaceError("label set must contain neutral")
    emotions = sorted(lbl for lbl in labels if lbl is not EmotionLabel.NEUTRAL)
    if not emotions:
        raise EmotionSpaceError("need at least one non-neutral label (M >= 2)")
    n = len(emotions)
    return DirectionTable(emotions, [TWO_PI * i / n for i in range(n)], threshold)


def sample_condition(table: DirectionTable, label: EmotionLabel | None,
                     rng: np.random.Generator) -> EmotionCode:
    """Draw one condition.

    ``None`` samples the whole disk; neutral samples the sub-threshold disk;
    an emotion keeps its learned direction with intensity in [T, 1].
    """
    if label is None:
        return EmotionCode(wrap_angle(rng.uniform(0.0, TWO_PI)), rng.uniform(0.0, 1.0))
    label = EmotionLabel.parse(label)
    if label is EmotionLabel.NEUTRAL:
        return EmotionCode(wrap_angle(rng.uniform(0.0, TWO_PI)), rng.uniform(0.0, table.threshold))
    theta = table.direction(label)
    return EmotionCode(theta, rng.uniform(table.threshold, 1.0))


def label_for_code(table: DirectionTable, code: EmotionCode) -> EmotionLabel:
    if code.rho < table.threshold:
        return EmotionLabel.NEUTRAL
    best, best_dist = None, math.inf
    for label, angle in sorted(table.directions().items()):
        dist = angular_distance(code.theta, angle)
        if dist < best_dist - _TIE_TOL:
            best, best_dist = label, dist
    return best


# Batched tensor variants used by the trainer. Labels use -1 for "no label"
# (whole-disk draw).

def sample_conditions(table: DirectionTable, labels: torch.Tensor,
                      generator: torch.Generator) -> tuple[torch.Tensor, torch.Tensor]:
    """Batched :func:`sample_condition`; gradients flow into ``table.angles``.

    Returns:
        ``(theta, rho)`` float64 tensors of shape ``(B,)``.
    """
    labels = labels.long()
    n = labels.shape[0]
    u_theta = torch.rand(n, generator=generator, dtype=torch.float64) * TWO_PI
    u_rho = torch.rand(n, generator=generator, dtype=torch.float64)
    T = table.threshold

    is_neutral = labels == int(EmotionLabel.NEUTRAL)
    is_emotion = (labels >= 0) & ~is_neutral
    rho = torch.where(is_neutral, u_rho * T, torch.where(is_emotion, T + u_rho * (1.0 - T), u_rho))

    # index into angles; non-emotion rows get a dummy index and are masked out
    lookup = torch.full((NUM_LABELS,), -1, dtype=torch.long)
    lookup[table._label_ids] = torch.arange(table.num_directions)
    idx = torch.where(is_emotion, lookup[labels.clamp(min=0)], torch.zeros_like(labels))
    if bool((idx[is_emotion] < 0).any()):
        raise EmotionSpaceError("label without a direction in the table")
    theta = torch.where(is_emotion, table.angles[idx.clamp(min=0)], u_theta)
    return theta, rho


def codes_to_xy(theta: torch.Tensor, rho: torch.Tensor) -> torch.Tensor:
    return torch.stack([rho * torch.cos(theta), rho * torch.sin(theta)], dim=1)


@torch.no_grad()
def labels_for_codes(table: DirectionTable, theta: torch.Tensor, rho: torch.Tensor) -> torch.Tensor:
    """Batched :func:`label_for_code`."""
    theta = theta.detach().to(torch.float64)
    diff = torch.remainder(theta[:, None] - table.angles.detach()[None, :], TWO_PI)
    dist = torch.minimum(diff, TWO_PI - diff)
    # directions are sorted by label id, so argmin over a tolerance-relaxed
    # minimum picks the lowest id on ties
    near = dist <= dist.min(dim=1, keepdim=True).values + _TIE_TOL
    first = near.to(torch.int8).argmax(dim=1)
    out = table._label_ids[first]
    return torch.where(rho.detach() < table.threshold, torch.full_like(out, int(EmotionLabel.NEUTRAL)), out)

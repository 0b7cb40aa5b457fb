"""Face detector clients.

Real detectors run as external programs; the adapter speaks a line-delimited
JSON protocol: the image path is passed as the last argument and each stdout
line is one detection ``{"bbox": [x, y, w, h], "confidence": p,
"landmarks": [[x, y], ...]}``. Empty output with exit status 0 means no faces.
"""

from __future__ import annotations

import json
import shlex
import subprocess
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

from PIL import Image


class IngestionError(RuntimeError):
    """An image could not be decoded or the detector failed on it."""


@dataclass(frozen=True)
class Detection:
    bbox: tuple[int, int, int, int]
    confidence: float
    landmarks: Optional[tuple[tuple[float, float], ...]] = None

    def clamped(self, width: int, height: int) -> "Detection":
        x, y, w, h = self.bbox
        x0, y0 = min(max(x, 0), width), min(max(y, 0), height)
        x1, y1 = min(max(x + w, 0), width), min(max(y + h, 0), height)
        return Detection((x0, y0, x1 - x0, y1 - y0), self.confidence, self.landmarks)

    @classmethod
    def from_json(cls, obj: dict) -> "Detection":
        bbox = tuple(int(round(float(v))) for v in obj["bbox"])
        if len(bbox) != 4:
            raise ValueError(f"bbox needs 4 values, got {obj['bbox']!r}")
        conf = float(obj["confidence"])
        if not 0.0 <= conf <= 1.0:
            raise ValueError(f"confidence {conf} outside [0, 1]")
        marks = obj.get("landmarks")
        if marks is not None:
            marks = tuple((float(p[0]), float(p[1])) for p in marks)
        return cls(bbox, conf, marks)


def open_image(path: str | Path) -> Image.Image:
    try:
        with Image.open(path) as im:
            return im.convert("RGB")
    except Exception as exc:  # PIL raises a zoo of exception types
        raise IngestionError(f"cannot decode {path}: {exc}") from exc


class DetectorClient:
    """Base client. Subclasses implement :meth:`_raw_detections`."""

    name = "detector"

    def __init__(self, min_confidence: float = 0.0):
        if not 0.0 <= min_confidence <= 1.0:
            raise ValueError("min_confidence must lie in [0, 1]")
        self.min_confidence = min_confidence

    def _raw_detections(self, path: Path, image: Image.Image) -> list[Detection]:
        raise NotImplementedError

    def detect(self, path: str | Path) -> list[Detection]:
        """Detections at or above ``min_confidence``, most confident first."""
        path = Path(path)
        image = open_image(path)
        found = [d.clamped(*image.size) for d in self._raw_detections(path, image)]
        found = [d for d in found if d.confidence >= self.min_confidence and d.bbox[2] > 0 and d.bbox[3] > 0]
        return sorted(found, key=lambda d: d.confidence, reverse=True)


class WholeFrameDetector(DetectorClient):
    """Stub that reports the whole frame as a face with confidence 1."""

    name = "whole-frame"

    def _raw_detections(self, path, image):
        return [Detection((0, 0, image.width, image.height), 1.0)]


class StaticDetector(DetectorClient):
    """Returns canned detections keyed by file name; for tests and dry runs."""

    name = "static"

    def __init__(self, table: dict[str, Sequence[Detection]], min_confidence: float = 0.0):
        super().__init__(min_confidence)
        self.table = table

    def _raw_detections(self, path, image):
        return list(self.table.get(path.name, ()))


class CommandDetector(DetectorClient):
    """Adapter around an external detector program."""

    name = "command"

    def __init__(self, command: str | Sequence[str], min_confidence: float = 0.0, timeout: float = 120.0):
        super().__init__(min_confidence)
        self.command = shlex.split(command) if isinstance(command, str) else list(command)
        if not self.command:
            raise ValueError("empty detector command")
        self.timeout = timeout

    def _raw_detections(self, path, image):
        try:
            proc = subprocess.run([*self.command, str(path)], capture_output=True, text=True,
                                  timeout=self.timeout, check=False)
        except (OSError, subprocess.TimeoutExpired) as exc:
            raise IngestionError(f"detector failed on {path}: {exc}") from exc
        if proc.returncode != 0:
            raise IngestionError(f"detector exited {proc.returncode} on {path}: {proc.stderr.strip()}")
        out = []
        for line in proc.stdout.splitlines():
            if line.strip():
                try:
                    out.append(Detection.from_json(json.loads(line)))
                except (ValueError, KeyError, TypeError) as exc:
                    raise IngestionError(f"bad detector output for {path}: {line!r}") from exc
        return out


def detect_primary_face(client: DetectorClient, path: str | Path) -> Detection | None:
    found = client.detect(path)
    return found[0] if found else None


def make_detector(spec: str, min_confidence: float = 0.0) -> DetectorClient:
    """``"whole-frame"`` or ``"cmd:<program and args>"``."""
    if spec == "whole-frame":
        return WholeFrameDetector(min_confidence)
    if spec.startswith("cmd:"):
        return CommandDetector(spec[4:], min_confidence)
    raise ValueError(f"unknown detector {spec!r}; use 'whole-frame' or 'cmd:<command>'")

"""Tiled output sheets: emotion grids, intensity sweeps, and disk rasters."""

from __future__ import annotations

import math

import numpy as np
import torch

from .emotion_space import DirectionTable, EmotionCode, EmotionLabel, cartesian_to_polar
from .metrics.smoothness import INTENSITIES

BLANK = 255


def grid_codes(table: DirectionTable) -> list[tuple[str, EmotionCode]]:
    """One code per canonical label at full intensity; neutral sits at the origin."""
    out = []
    for label in EmotionLabel:
        if label is EmotionLabel.NEUTRAL:
            out.append((label.label_name, EmotionCode(0.0, 0.0)))
        else:
            out.append((label.label_name, EmotionCode(table.direction(label), 1.0)))
    return out


def interpolation_codes(table: DirectionTable, emotion: EmotionLabel) -> list[tuple[str, EmotionCode]]:
    emotion = EmotionLabel.parse(emotion)
    if emotion is EmotionLabel.NEUTRAL:
        raise ValueError("neutral has no direction to interpolate along")
    theta = table.direction(emotion)
    return [(emotion.label_name, EmotionCode(theta, rho)) for rho in INTENSITIES]


def gamut_codes(k: int) -> list[tuple[int, int, EmotionCode]]:
    """``(row, col, code)`` for the cells of a k x k raster of [-1, 1]^2 that fall inside the unit disk.

    Row 0 is the top (y = +1).
    """
    if k < 2:
        raise ValueError("gamut raster needs k >= 2")
    axis = np.linspace(-1.0, 1.0, k)
    cells = []
    for r, y in enumerate(axis[::-1]):
        for c, x in enumerate(axis):
            if math.hypot(x, y) <= 1.0 + 1e-12:
                cells.append((r, c, cartesian_to_polar(x, y)))
    return cells


def to_uint8(images: torch.Tensor) -> np.ndarray:
    """(B, 3, S, S) in [-1, 1] -> (B, S, S, 3) uint8."""
    arr = ((images.detach().float().clamp(-1, 1) + 1) * 127.5).round().byte()
    return arr.permute(0, 2, 3, 1).numpy()


@torch.no_grad()
def render(G, image: torch.Tensor, codes: list[EmotionCode]) -> np.ndarray:
    """Translate one image (3, S, S) under each code; returns (n, S, S, 3) uint8."""
    batch = image.unsqueeze(0).expand(len(codes), -1, -1, -1)
    xy = torch.tensor([c.xy for c in codes], dtype=image.dtype)
    return to_uint8(G(batch, xy))


def tile(cells: dict[tuple[int, int], np.ndarray], rows: int, cols: int, size: int) -> np.ndarray:
    sheet = np.full((rows * size, cols * size, 3), BLANK, dtype=np.uint8)
    for (r, c), px in cells.items():
        sheet[r * size:(r + 1) * size, c * size:(c + 1) * size] = px
    return sheet


def make_sheet(G, table: DirectionTable, images: torch.Tensor, mode: str, emotion=None,
               gamut_size: int = 9) -> tuple[np.ndarray, dict]:
    """Render a tiled sheet for ``images`` (N, 3, S, S).

    ``grid`` gives one row per input with the 7 labels as columns,
    ``interpolate`` one row per input with 10 intensities, and ``gamut`` one
    ``gamut_size`` square block per input, stacked vertically.
    """
    size = images.shape[-1]
    cells, tiles = {}, []
    if mode in ("grid", "interpolate"):
        named = grid_codes(table) if mode == "grid" else interpolation_codes(table, emotion)
        codes = [c for _, c in named]
        for i, image in enumerate(images):
            for j, px in enumerate(render(G, image, codes)):
                cells[(i, j)] = px
                tiles.append({"row": i, "col": j, "input": i, "label": named[j][0],
                              "theta": codes[j].theta, "rho": codes[j].rho})
        rows, cols = len(images), len(codes)
    elif mode == "gamut":
        raster = gamut_codes(gamut_size)
        codes = [c for _, _, c in raster]
        for i, image in enumerate(images):
            for (r, c, code), px in zip(raster, render(G, image, codes)):
                row = i * gamut_size + r
                cells[(row, c)] = px
                tiles.append({"row": row, "col": c, "input": i, "theta": code.theta, "rho": code.rho})
        rows, cols = len(images) * gamut_size, gamut_size
    else:
        raise ValueError(f"unknown mode {mode!r}")
    meta = {"mode": mode, "rows": rows, "cols": cols, "tile_size": size, "tiles": tiles}
    return tile(cells, rows, cols, size), meta

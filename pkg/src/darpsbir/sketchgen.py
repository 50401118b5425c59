"""Stroke sequences, partial-completion stages, rasterization and preprocessing.

A stroke sequence is a list of polylines, each an (n, 2) float array of
(x, y) points in the normalized unit square. Authored strokes carry at
least two points; partial stages may truncate a stroke down to a single
point, which rasterizes as a single pixel.

Rasters are (H, W) float arrays in [0, 1], row-major, 0 = background,
1 = full ink. Pixel mapping: (x, y) -> (col, row) = rint(x*(W-1), y*(H-1)).
"""
from __future__ import annotations

import math

import numpy as np

from . import kernels


class InputError(ValueError):
    pass


def validate_strokes(strokes) -> None:
    if not strokes:
        raise InputError("empty stroke sequence")
    for poly in strokes:
        arr = np.asarray(poly)
        if arr.ndim != 2 or arr.shape[1] != 2 or arr.shape[0] < 2:
            raise InputError(f"polyline must be (n>=2, 2); got shape {arr.shape}")
        if arr.min() < 0.0 or arr.max() > 1.0:
            raise InputError("stroke coordinates must lie in [0, 1]")


def total_points(strokes) -> int:
    return sum(len(p) for p in strokes)


def partial_stages(strokes, stages: int):
    """Split the drawing into `stages` point-count prefixes.

    Stage s (1-based) holds the first ceil(s * L / stages) points of the
    flattened drawing order, re-grouped into polylines; the final stage is
    the complete sequence.
    """
    if stages < 2:
        raise InputError("stages must be >= 2")
    if not strokes or total_points(strokes) == 0:
        raise InputError("empty stroke sequence")
    npoints = total_points(strokes)
    out = []
    for s in range(1, stages + 1):
        budget = math.ceil(s * npoints / stages)
        stage = []
        remaining = budget
        for poly in strokes:
            if remaining <= 0:
                break
            take = min(len(poly), remaining)
            stage.append(np.asarray(poly)[:take])
            remaining -= take
        out.append(stage)
    return out


def rasterize(strokes, width: int, height: int, dtype=np.float32) -> np.ndarray:
    """Draw 1-pixel Bresenham polylines onto a zero canvas, ink = 1.0."""
    if width < 8 or height < 8:
        raise InputError("raster dims must be >= 8")
    canvas = np.zeros((height, width), dtype=dtype)
    for poly in strokes:
        arr = np.asarray(poly, dtype=np.float64)
        if arr.shape[0] == 0:
            continue
        cols = np.rint(arr[:, 0] * (width - 1)).astype(np.int64)
        rows = np.rint(arr[:, 1] * (height - 1)).astype(np.int64)
        kernels.draw_polyline(canvas, cols, rows)
    return canvas


def dilate(raster: np.ndarray, radius: int) -> np.ndarray:
    """Morphological max-filter over a (2r+1)^2 square element."""
    if radius < 0:
        raise InputError("radius must be >= 0")
    if radius == 0:
        return raster.copy()
    return kernels.dilate(raster, radius)


# ---------------------------------------------------------------------------
# Augmentation: the same transform applied to strokes and raster.
# rotate_90 is clockwise; rasters must be square.
# ---------------------------------------------------------------------------

_STROKE_MAPS = {
    "flip_h": lambda x, y: (1.0 - x, y),
    "rotate_90": lambda x, y: (1.0 - y, x),
    "rotate_180": lambda x, y: (1.0 - x, 1.0 - y),
    "rotate_270": lambda x, y: (y, 1.0 - x),
}

_RASTER_MAPS = {
    "flip_h": lambda img: np.fliplr(img).copy(),
    "rotate_90": lambda img: np.rot90(img, k=-1).copy(),
    "rotate_180": lambda img: np.rot90(img, k=2).copy(),
    "rotate_270": lambda img: np.rot90(img, k=1).copy(),
}

AUGMENT_OPS = tuple(_STROKE_MAPS)

_ID_SUFFIX = {"flip_h": "fh", "rotate_90": "r90", "rotate_180": "r180", "rotate_270": "r270"}


def augment_strokes(strokes, op: str):
    if op not in _STROKE_MAPS:
        raise InputError(f"unknown augment op: {op}")
    fn = _STROKE_MAPS[op]
    out = []
    for poly in strokes:
        arr = np.asarray(poly, dtype=np.float64)
        nx, ny = fn(arr[:, 0], arr[:, 1])
        out.append(np.stack([nx, ny], axis=1))
    return out


def augment_raster(img: np.ndarray, op: str) -> np.ndarray:
    if op not in _RASTER_MAPS:
        raise InputError(f"unknown augment op: {op}")
    if img.shape[0] != img.shape[1]:
        raise InputError("augmentation requires a square raster")
    return _RASTER_MAPS[op](img)


def augment_id(item_id: str, op: str) -> str:
    return f"{item_id}_{_ID_SUFFIX[op]}"


# ---------------------------------------------------------------------------
# Noise-stroke injection.
# ---------------------------------------------------------------------------

def inject_noise_strokes(strokes, p: float, seed: int):
    """After each genuine stroke, with probability p insert one short random
    polyline (2-4 points, total length <= 0.15). Returns (strokes, is_noise).
    """
    if not 0.0 <= p <= 1.0:
        raise InputError("noise probability must be in [0, 1]")
    rng = np.random.default_rng(seed)
    out = []
    flags = []
    for poly in strokes:
        out.append(np.asarray(poly))
        flags.append(False)
        if p > 0.0 and rng.random() < p:
            out.append(_random_noise_stroke(rng))
            flags.append(True)
    return out, flags


def _random_noise_stroke(rng: np.random.Generator) -> np.ndarray:
    npts = int(rng.integers(2, 5))
    start = rng.uniform(0.1, 0.9, size=2)
    pts = [start]
    step_budget = 0.15 / (npts - 1)
    for _ in range(npts - 1):
        ang = rng.uniform(0.0, 2.0 * np.pi)
        length = rng.uniform(0.3, 1.0) * step_budget
        nxt = pts[-1] + length * np.array([np.cos(ang), np.sin(ang)])
        pts.append(np.clip(nxt, 0.0, 1.0))
    return np.stack(pts, axis=0)

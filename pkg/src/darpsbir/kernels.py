"""Hot raster kernels: stroke line drawing, square dilation, retina crops.

Every kernel exists twice: a plain-python/numpy implementation and a numba
@njit build of the same code (or an equivalent vectorized form). The active
backend is chosen at import time: numba when importable, unless the
environment variable DARPSBIR_NUMBA is set to 0/false/off, which forces the
fallback. Both implementations of each kernel are exported so tests and
benchmarks can compare them directly.
"""
from __future__ import annotations

import os

import numpy as np


def _env_wants_numba() -> bool:
    return os.environ.get("DARPSBIR_NUMBA", "1").lower() not in ("0", "false", "no", "off")


if _env_wants_numba():
    try:
        from numba import njit

        HAVE_NUMBA = True
    except ImportError:  # pragma: no cover - numba is a declared dependency
        HAVE_NUMBA = False
else:
    HAVE_NUMBA = False


# ---------------------------------------------------------------------------
# Bresenham polyline drawing.
#
# Segments are drawn from the lexicographically smaller endpoint so that a
# reversed polyline produces the identical pixel set.
# ---------------------------------------------------------------------------

def _draw_polyline_impl(canvas, cols, rows):
    n = cols.shape[0]
    if n == 1:
        canvas[rows[0], cols[0]] = 1.0
        return
    for s in range(n - 1):
        x0, y0 = cols[s], rows[s]
        x1, y1 = cols[s + 1], rows[s + 1]
        if y0 > y1 or (y0 == y1 and x0 > x1):
            x0, y0, x1, y1 = x1, y1, x0, y0
        dx = abs(x1 - x0)
        dy = -abs(y1 - y0)
        sx = 1 if x0 < x1 else -1
        sy = 1 if y0 < y1 else -1
        err = dx + dy
        while True:
            canvas[y0, x0] = 1.0
            if x0 == x1 and y0 == y1:
                break
            e2 = 2 * err
            if e2 >= dy:
                err += dy
                x0 += sx
            if e2 <= dx:
                err += dx
                y0 += sy


def _draw_polyline_numpy(canvas, cols, rows):
    _draw_polyline_impl(canvas, cols, rows)


if HAVE_NUMBA:
    _draw_polyline_numba = njit(cache=True)(_draw_polyline_impl)


# ---------------------------------------------------------------------------
# Square morphological dilation (max filter, zero padding).
# ---------------------------------------------------------------------------

def _dilate_numpy(img, radius):
    if radius == 0:
        return img.copy()
    h, w = img.shape
    out = img.copy()
    for dy in range(-radius, radius + 1):
        for dx in range(-radius, radius + 1):
            if dy == 0 and dx == 0:
                continue
            sy0, sy1 = max(0, dy), min(h, h + dy)
            sx0, sx1 = max(0, dx), min(w, w + dx)
            ty0, ty1 = max(0, -dy), min(h, h - dy)
            tx0, tx1 = max(0, -dx), min(w, w - dx)
            np.maximum(out[ty0:ty1, tx0:tx1], img[sy0:sy1, sx0:sx1], out=out[ty0:ty1, tx0:tx1])
    return out


def _dilate_loops(img, radius):
    h, w = img.shape
    out = np.empty_like(img)
    for y in range(h):
        y0 = max(0, y - radius)
        y1 = min(h, y + radius + 1)
        for x in range(w):
            x0 = max(0, x - radius)
            x1 = min(w, x + radius + 1)
            best = img[y, x]
            for yy in range(y0, y1):
                for xx in range(x0, x1):
                    if img[yy, xx] > best:
                        best = img[yy, xx]
            out[y, x] = best
    return out


if HAVE_NUMBA:
    _dilate_numba = njit(cache=True)(_dilate_loops)


# ---------------------------------------------------------------------------
# Retina crop: zero-padded square crop centered at a pixel, area-averaged
# down to patch x patch. side == patch degenerates to a plain padded crop.
# ---------------------------------------------------------------------------

def _avg_matrix(side, patch, dtype):
    # row i of the output averages input cells overlapping [i*r, (i+1)*r)
    r = side / patch
    m = np.zeros((patch, side), dtype=dtype)
    for i in range(patch):
        lo = i * r
        hi = lo + r
        for k in range(int(np.floor(lo)), min(side, int(np.ceil(hi)))):
            m[i, k] = (min(k + 1.0, hi) - max(float(k), lo)) / r
    return m


def _retina_numpy(img, cy, cx, side, patch):
    h, w = img.shape
    crop = np.zeros((side, side), dtype=img.dtype)
    top = cy - side // 2
    left = cx - side // 2
    r0, r1 = max(0, top), min(h, top + side)
    c0, c1 = max(0, left), min(w, left + side)
    if r1 > r0 and c1 > c0:
        crop[r0 - top:r1 - top, c0 - left:c1 - left] = img[r0:r1, c0:c1]
    if side == patch:
        return crop
    m = _avg_matrix(side, patch, img.dtype)
    return m @ crop @ m.T


def _retina_loops(img, cy, cx, side, patch):
    h, w = img.shape
    out = np.zeros((patch, patch), dtype=img.dtype)
    top = cy - side // 2
    left = cx - side // 2
    if side == patch:
        for k in range(side):
            row = top + k
            if row < 0 or row >= h:
                continue
            for l in range(side):
                col = left + l
                if 0 <= col < w:
                    out[k, l] = img[row, col]
        return out
    r = side / patch
    for i in range(patch):
        y0 = i * r
        y1 = y0 + r
        k0 = int(np.floor(y0))
        k1 = min(side, int(np.ceil(y1)))
        for j in range(patch):
            x0 = j * r
            x1 = x0 + r
            l0 = int(np.floor(x0))
            l1 = min(side, int(np.ceil(x1)))
            acc = 0.0
            for k in range(k0, k1):
                wy = min(k + 1.0, y1) - max(float(k), y0)
                row = top + k
                if wy <= 0.0 or row < 0 or row >= h:
                    continue
                for l in range(l0, l1):
                    wx = min(l + 1.0, x1) - max(float(l), x0)
                    col = left + l
                    if wx <= 0.0 or col < 0 or col >= w:
                        continue
                    acc += wy * wx * img[row, col]
            out[i, j] = acc / (r * r)
    return out


if HAVE_NUMBA:
    _retina_numba = njit(cache=True)(_retina_loops)


# ---------------------------------------------------------------------------
# Backend dispatch.
# ---------------------------------------------------------------------------

if HAVE_NUMBA:
    BACKEND = "numba"
    draw_polyline = _draw_polyline_numba
    dilate = _dilate_numba
    retina_patch = _retina_numba
else:
    BACKEND = "numpy"
    draw_polyline = _draw_polyline_numpy
    dilate = _dilate_numpy
    retina_patch = _retina_numpy


def implementations():
    """Both backends of each kernel, keyed by backend name (for tests/bench)."""
    impls = {"numpy": {
        "draw_polyline": _draw_polyline_numpy,
        "dilate": _dilate_numpy,
        "retina_patch": _retina_numpy,
    }}
    if HAVE_NUMBA:
        impls["numba"] = {
            "draw_polyline": _draw_polyline_numba,
            "dilate": _dilate_numba,
            "retina_patch": _retina_numba,
        }
    return impls

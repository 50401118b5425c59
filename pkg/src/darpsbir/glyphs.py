"""Parametric glyph families: the synthetic stand-in for photo datasets.

Each class is a recipe of 2-3 primitives (ellipse / regular polygon / arc)
with class-specific layout; each item perturbs the recipe parameters to
produce a unique fine-grained instance. The retrieval target image is an
anti-aliased filled rendering with per-instance grayscale shading; the
query sketch is the jittered outline strokes of the same primitives.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SUPERSAMPLE = 4

# canvas cells used to spread primitives apart
_CELLS = np.array([[0.3, 0.3], [0.7, 0.3], [0.3, 0.7], [0.7, 0.7], [0.5, 0.5]])


@dataclass
class Primitive:
    kind: str                 # ellipse | polygon | arc
    center: np.ndarray        # (2,)
    size: np.ndarray          # ellipse: (rx, ry); polygon: (radius,); arc: (radius,)
    angle: float              # rotation / arc start
    extra: float = 0.0        # polygon: n_sides; arc: angular span
    gray: float = 0.7

    def perturbed(self, rng: np.random.Generator, gray_shift: float) -> "Primitive":
        return Primitive(
            kind=self.kind,
            center=np.clip(self.center + rng.normal(0.0, 0.02, size=2), 0.12, 0.88),
            size=np.clip(self.size * (1.0 + rng.normal(0.0, 0.06, size=self.size.shape)), 0.04, 0.32),
            angle=self.angle + rng.normal(0.0, 0.12),
            extra=self.extra,
            gray=float(np.clip(self.gray + gray_shift, 0.25, 0.95)),
        )

    def params(self) -> np.ndarray:
        return np.concatenate([self.center, self.size, [self.angle, self.extra, self.gray]])


@dataclass
class Glyph:
    primitives: list[Primitive] = field(default_factory=list)

    def shape_params(self) -> np.ndarray:
        return np.concatenate([p.params() for p in self.primitives])


def class_recipe(class_idx: int, rng: np.random.Generator) -> Glyph:
    """Deterministic class family; structure varies with the class index so
    families stay visually distinct even for many classes."""
    n_prim = 2 + (class_idx % 2)
    kinds = ("ellipse", "polygon", "arc")
    cells = rng.permutation(len(_CELLS))[:n_prim]
    prims = []
    for j in range(n_prim):
        kind = kinds[(class_idx // (3 ** j) + j) % 3]
        center = _CELLS[cells[j]] + rng.uniform(-0.06, 0.06, size=2)
        gray = 0.45 + 0.4 * rng.random()
        if kind == "ellipse":
            size = rng.uniform(0.10, 0.24, size=2)
            prims.append(Primitive(kind, center, size, rng.uniform(0, np.pi), 0.0, gray))
        elif kind == "polygon":
            nside = int(rng.integers(3, 7))
            size = np.array([rng.uniform(0.12, 0.24)])
            prims.append(Primitive(kind, center, size, rng.uniform(0, np.pi), float(nside), gray))
        else:
            size = np.array([rng.uniform(0.12, 0.22)])
            span = rng.uniform(2.4, 5.2)
            prims.append(Primitive(kind, center, size, rng.uniform(0, 2 * np.pi), span, gray))
    return Glyph(prims)


def instance_glyph(recipe: Glyph, item_idx: int, items_per_class: int,
                   rng: np.random.Generator) -> Glyph:
    # spread shading across instances so rasters stay distinct after 8-bit
    # quantization even if geometry rounds identically
    gray_shift = 0.3 * (item_idx / max(1, items_per_class) - 0.5) + rng.normal(0.0, 0.02)
    return Glyph([p.perturbed(rng, gray_shift) for p in recipe.primitives])


# ---------------------------------------------------------------------------
# Filled anti-aliased image rendering (supersampled painter's order).
# ---------------------------------------------------------------------------

def render_image(glyph: Glyph, width: int = 64, height: int = 64) -> np.ndarray:
    ss = SUPERSAMPLE
    hw, hh = width * ss, height * ss
    xs = (np.arange(hw) + 0.5) / hw
    ys = (np.arange(hh) + 0.5) / hh
    gx, gy = np.meshgrid(xs, ys)
    canvas = np.zeros((hh, hw), dtype=np.float64)
    for prim in glyph.primitives:
        mask = _primitive_mask(prim, gx, gy)
        canvas[mask] = prim.gray
    out = canvas.reshape(height, ss, width, ss).mean(axis=(1, 3))
    return out.astype(np.float32)


def _primitive_mask(prim: Primitive, gx: np.ndarray, gy: np.ndarray) -> np.ndarray:
    dx = gx - prim.center[0]
    dy = gy - prim.center[1]
    if prim.kind == "ellipse":
        c, s = np.cos(prim.angle), np.sin(prim.angle)
        xr = c * dx + s * dy
        yr = -s * dx + c * dy
        return (xr / prim.size[0]) ** 2 + (yr / prim.size[1]) ** 2 <= 1.0
    if prim.kind == "polygon":
        verts = _polygon_vertices(prim)
        mask = np.ones_like(gx, dtype=bool)
        n = len(verts)
        for i in range(n):
            ax, ay = verts[i]
            bx, by = verts[(i + 1) % n]
            cross = (bx - ax) * (gy - ay) - (by - ay) * (gx - ax)
            mask &= cross >= 0
        return mask
    # arc: a thick band along the circle between start and start+span
    radius = prim.size[0]
    dist = np.sqrt(dx * dx + dy * dy)
    band = np.abs(dist - radius) <= 0.012
    theta = np.mod(np.arctan2(dy, dx) - prim.angle, 2 * np.pi)
    return band & (theta <= prim.extra)


def _polygon_vertices(prim: Primitive) -> np.ndarray:
    n = int(prim.extra)
    ang = prim.angle + 2 * np.pi * np.arange(n) / n
    return np.stack([prim.center[0] + prim.size[0] * np.cos(ang),
                     prim.center[1] + prim.size[0] * np.sin(ang)], axis=1)


# ---------------------------------------------------------------------------
# Outline strokes.
# ---------------------------------------------------------------------------

def outline_strokes(glyph: Glyph, rng: np.random.Generator, jitter: float = 0.004):
    strokes = []
    for prim in glyph.primitives:
        for poly in _primitive_outline(prim):
            noisy = poly + rng.normal(0.0, jitter, size=poly.shape)
            strokes.append(np.clip(noisy, 0.0, 1.0))
    return strokes


def _primitive_outline(prim: Primitive):
    if prim.kind == "ellipse":
        # two half-outlines so a glyph yields several natural strokes
        c, s = np.cos(prim.angle), np.sin(prim.angle)
        halves = []
        for t0, t1 in ((0.0, np.pi), (np.pi, 2 * np.pi)):
            t = np.linspace(t0, t1, 17)
            ex = prim.size[0] * np.cos(t)
            ey = prim.size[1] * np.sin(t)
            halves.append(np.stack([prim.center[0] + c * ex - s * ey,
                                    prim.center[1] + s * ex + c * ey], axis=1))
        return halves
    if prim.kind == "polygon":
        verts = _polygon_vertices(prim)
        closed = np.vstack([verts, verts[:1]])
        return [closed]
    t = np.linspace(0.0, prim.extra, 17)
    ang = prim.angle + t
    arc = np.stack([prim.center[0] + prim.size[0] * np.cos(ang),
                    prim.center[1] + prim.size[0] * np.sin(ang)], axis=1)
    return [arc]

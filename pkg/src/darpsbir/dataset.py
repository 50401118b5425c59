"""Dataset generation, manifest I/O and raster storage.

The manifest is a single JSON document:
{"raster": {"width": 64, "height": 64}, "seed": int,
 "items": [{"id", "class_id", "split", "image_path",
            "strokes": [[[x, y], ...], ...], "stages": 17,
            "noise_flags": [bool, ...]}]}
Target rasters are stored as 8-bit grayscale PNG (or PGM), ink = 255.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from . import glyphs, sketchgen


class ConfigError(ValueError):
    pass


@dataclass
class SketchItem:
    id: str
    class_id: int
    split: str
    strokes: list
    stages: int
    noise_flags: list
    image_path: str
    shape_params: np.ndarray | None = None
    _image: np.ndarray | None = field(default=None, repr=False)


@dataclass
class Dataset:
    width: int
    height: int
    seed: int
    items: list
    root: Path

    def __post_init__(self):
        ids = [it.id for it in self.items]
        if len(ids) != len(set(ids)):
            raise ConfigError("duplicate item ids in manifest")
        self._by_id = {it.id: it for it in self.items}

    def item(self, item_id: str) -> SketchItem:
        return self._by_id[item_id]

    def split_items(self, split: str | None):
        if split is None or split == "all":
            return list(self.items)
        return [it for it in self.items if it.split == split]

    def ids(self, split: str | None = None):
        return [it.id for it in self.split_items(split)]

    def load_image(self, item: SketchItem, dtype=np.float32) -> np.ndarray:
        if item._image is None:
            item._image = load_raster(self.root / item.image_path)
        return item._image.astype(dtype, copy=False)


# ---------------------------------------------------------------------------
# Raster file I/O (8-bit grayscale, ink = 255).
# ---------------------------------------------------------------------------

def save_raster(path: Path, raster: np.ndarray, fmt: str = "png") -> None:
    data = np.rint(np.clip(raster, 0.0, 1.0) * 255.0).astype(np.uint8)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if fmt == "png":
        Image.fromarray(data, mode="L").save(path, format="PNG")
    elif fmt == "pgm":
        with open(path, "wb") as fh:
            fh.write(f"P5 {data.shape[1]} {data.shape[0]} 255\n".encode())
            fh.write(data.tobytes())
    else:
        raise ConfigError(f"unknown raster format: {fmt}")


def load_raster(path: Path) -> np.ndarray:
    path = Path(path)
    if path.suffix == ".pgm":
        with open(path, "rb") as fh:
            header = fh.readline().split()
            w, h = int(header[1]), int(header[2])
            data = np.frombuffer(fh.read(w * h), dtype=np.uint8).reshape(h, w)
    else:
        data = np.asarray(Image.open(path).convert("L"))
    return data.astype(np.float32) / 255.0


def png_bytes(raster: np.ndarray) -> bytes:
    import io

    data = np.rint(np.clip(raster, 0.0, 1.0) * 255.0).astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(data, mode="L").save(buf, format="PNG")
    return buf.getvalue()


# ---------------------------------------------------------------------------
# Generation.
# ---------------------------------------------------------------------------

def generate_dataset(n_classes: int, items_per_class: int, seed: int,
                     noise_prob: float, out_dir, stages: int = 17,
                     width: int = 64, height: int = 64, fmt: str = "png",
                     test_fraction: float = 0.125, augment: bool = False) -> Dataset:
    """Procedurally generate paired (strokes, image) items and write them out.

    Deterministic given the seed: per-class and per-item RNG streams are
    spawned from one SeedSequence so items can be generated in any order.
    """
    if n_classes < 2:
        raise ConfigError("n_classes must be >= 2")
    if items_per_class < 1:
        raise ConfigError("items_per_class must be >= 1")
    if not 0.0 <= noise_prob <= 1.0:
        raise ConfigError("noise_prob must be in [0, 1]")

    out_dir = Path(out_dir)
    (out_dir / "images").mkdir(parents=True, exist_ok=True)
    root_seq = np.random.SeedSequence(seed)
    class_seqs = root_seq.spawn(n_classes)
    n_test = 0 if items_per_class == 1 else min(items_per_class - 1,
                                                max(1, round(items_per_class * test_fraction)))

    items = []
    for c in range(n_classes):
        class_rng = np.random.default_rng(class_seqs[c])
        recipe = glyphs.class_recipe(c, class_rng)
        item_seqs = class_seqs[c].spawn(items_per_class)
        for i in range(items_per_class):
            rng = np.random.default_rng(item_seqs[i])
            glyph = glyphs.instance_glyph(recipe, i, items_per_class, rng)
            strokes = glyphs.outline_strokes(glyph, rng)
            noise_seed = int(rng.integers(0, 2 ** 31))
            strokes, flags = sketchgen.inject_noise_strokes(strokes, noise_prob, noise_seed)
            split = "test" if i >= items_per_class - n_test else "train"
            item_id = f"c{c:03d}i{i:03d}"
            image = glyphs.render_image(glyph, width, height)
            rel = f"images/{item_id}.{fmt}"
            save_raster(out_dir / rel, image, fmt)
            items.append(SketchItem(item_id, c, split, strokes, stages, flags, rel,
                                    glyph.shape_params()))
            if augment:
                for op in sketchgen.AUGMENT_OPS:
                    aug_id = sketchgen.augment_id(item_id, op)
                    aug_strokes = sketchgen.augment_strokes(strokes, op)
                    aug_image = sketchgen.augment_raster(image, op)
                    aug_rel = f"images/{aug_id}.{fmt}"
                    save_raster(out_dir / aug_rel, aug_image, fmt)
                    items.append(SketchItem(aug_id, c, split, aug_strokes, stages,
                                            list(flags), aug_rel, glyph.shape_params()))

    ds = Dataset(width, height, seed, items, out_dir)
    write_manifest(ds, out_dir / "manifest.json")
    return ds


def write_manifest(ds: Dataset, path: Path) -> None:
    doc = {
        "raster": {"width": ds.width, "height": ds.height},
        "seed": ds.seed,
        "items": [
            {
                "id": it.id,
                "class_id": it.class_id,
                "split": it.split,
                "image_path": it.image_path,
                "strokes": [np.asarray(p).tolist() for p in it.strokes],
                "stages": it.stages,
                "noise_flags": list(map(bool, it.noise_flags)),
            }
            for it in ds.items
        ],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, separators=(",", ":"))


def load_manifest(path) -> Dataset:
    path = Path(path)
    if path.is_dir():
        path = path / "manifest.json"
    if not path.exists():
        raise FileNotFoundError(f"manifest not found: {path}")
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    root = path.parent
    items = []
    for rec in doc["items"]:
        strokes = [np.asarray(p, dtype=np.float64) for p in rec["strokes"]]
        items.append(SketchItem(rec["id"], rec["class_id"], rec["split"], strokes,
                                rec["stages"], rec["noise_flags"], rec["image_path"]))
        if not (root / rec["image_path"]).exists():
            raise FileNotFoundError(f"missing image file: {rec['image_path']}")
    return Dataset(doc["raster"]["width"], doc["raster"]["height"], doc["seed"], items, root)


# ---------------------------------------------------------------------------
# Stage rendering (sketch side of the pipeline).
# ---------------------------------------------------------------------------

def render_stage_rasters(ds: Dataset, item: SketchItem, dilate_radius: int = 1,
                         dtype=np.float32) -> np.ndarray:
    """All S partial-stage rasters for an item, dilated, stacked (S, H, W)."""
    stages = sketchgen.partial_stages(item.strokes, item.stages)
    out = np.empty((item.stages, ds.height, ds.width), dtype=dtype)
    for s, strokes in enumerate(stages):
        r = sketchgen.rasterize(strokes, ds.width, ds.height, dtype=dtype)
        out[s] = sketchgen.dilate(r, dilate_radius) if dilate_radius > 0 else r
    return out


def full_sketch_raster(ds: Dataset, item: SketchItem, dilate_radius: int = 1,
                       dtype=np.float32) -> np.ndarray:
    r = sketchgen.rasterize(item.strokes, ds.width, ds.height, dtype=dtype)
    return sketchgen.dilate(r, dilate_radius) if dilate_radius > 0 else r

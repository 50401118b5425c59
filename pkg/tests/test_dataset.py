import hashlib
import json
from pathlib import Path

import numpy as np
import pytest

from darpsbir.dataset import (ConfigError, generate_dataset, load_manifest,
                              load_raster, render_stage_rasters, save_raster)


def _dir_hash(root: Path) -> str:
    h = hashlib.sha256()
    for p in sorted(root.rglob("*")):
        if p.is_file():
            h.update(p.relative_to(root).as_posix().encode())
            h.update(p.read_bytes())
    return h.hexdigest()


def test_generation_counts_and_distinct_images(tmp_path):
    ds = generate_dataset(8, 4, seed=3, noise_prob=0.0, out_dir=tmp_path)
    assert len(ds.items) == 32
    hashes = {hashlib.sha256((tmp_path / it.image_path).read_bytes()).hexdigest()
              for it in ds.items}
    assert len(hashes) == 32
    assert all(not f for it in ds.items for f in it.noise_flags)


def test_generation_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    generate_dataset(4, 3, seed=9, noise_prob=0.3, out_dir=a)
    generate_dataset(4, 3, seed=9, noise_prob=0.3, out_dir=b)
    assert _dir_hash(a) == _dir_hash(b)


def test_generation_validation(tmp_path):
    with pytest.raises(ConfigError):
        generate_dataset(1, 3, seed=0, noise_prob=0.0, out_dir=tmp_path)
    with pytest.raises(ConfigError):
        generate_dataset(3, 0, seed=0, noise_prob=0.0, out_dir=tmp_path)
    with pytest.raises(ConfigError):
        generate_dataset(3, 3, seed=0, noise_prob=1.5, out_dir=tmp_path)


def test_manifest_round_trip(tmp_path):
    ds = generate_dataset(3, 2, seed=1, noise_prob=0.5, out_dir=tmp_path)
    loaded = load_manifest(tmp_path)
    assert [it.id for it in loaded.items] == [it.id for it in ds.items]
    for a, b in zip(ds.items, loaded.items):
        assert a.split == b.split and a.class_id == b.class_id
        assert len(a.strokes) == len(b.strokes)
        for pa, pb in zip(a.strokes, b.strokes):
            assert np.allclose(pa, pb)
    doc = json.loads((tmp_path / "manifest.json").read_text())
    assert doc["raster"] == {"width": 64, "height": 64}
    assert set(doc["items"][0]) == {"id", "class_id", "split", "image_path",
                                    "strokes", "stages", "noise_flags"}


def test_missing_image_detected(tmp_path):
    generate_dataset(2, 2, seed=1, noise_prob=0.0, out_dir=tmp_path)
    victim = next(tmp_path.glob("images/*.png"))
    victim.unlink()
    with pytest.raises(FileNotFoundError):
        load_manifest(tmp_path)


def test_splits_disjoint_and_sized(tmp_path):
    ds = generate_dataset(5, 8, seed=2, noise_prob=0.0, out_dir=tmp_path)
    train = {it.id for it in ds.split_items("train")}
    test = {it.id for it in ds.split_items("test")}
    assert not train & test
    assert len(test) == 5  # one held-out item per class at 8 per class


def test_raster_file_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    img = rng.random((64, 64)).astype(np.float32)
    quantized = np.rint(img * 255) / 255
    for fmt in ("png", "pgm"):
        path = tmp_path / f"x.{fmt}"
        save_raster(path, img, fmt)
        again = load_raster(path)
        assert np.allclose(again, quantized, atol=1e-7)


def test_stage_rasters_shape_and_monotone(tmp_path):
    ds = generate_dataset(2, 2, seed=4, noise_prob=0.2, out_dir=tmp_path)
    item = ds.items[0]
    stages = render_stage_rasters(ds, item, dilate_radius=0)
    assert stages.shape == (17, 64, 64)
    for a, b in zip(stages, stages[1:]):
        assert np.all(b >= a)


def test_augmented_generation(tmp_path):
    ds = generate_dataset(2, 2, seed=5, noise_prob=0.0, out_dir=tmp_path, augment=True)
    assert len(ds.items) == 4 * 5  # original + four ops
    suffixes = {it.id.rsplit("_", 1)[-1] for it in ds.items if "_" in it.id}
    assert suffixes == {"fh", "r90", "r180", "r270"}

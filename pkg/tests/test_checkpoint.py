import json
import struct

import numpy as np
import pytest

from darpsbir.checkpoint import (MAGIC, CheckpointError, read_checkpoint,
                                 write_checkpoint)


def test_round_trip_bit_exact(tmp_path):
    rng = np.random.default_rng(0)
    tensors = {
        "a/w": rng.standard_normal((4, 3)).astype(np.float32),
        "a/b": rng.standard_normal(4).astype(np.float32),
        "wide": rng.standard_normal((2, 2, 2)).astype(np.float64),
    }
    meta = {"margin": 0.3, "note": "x"}
    path = tmp_path / "m.ckpt"
    write_checkpoint(path, tensors, meta)
    loaded, got_meta = read_checkpoint(path)
    assert got_meta == meta
    assert set(loaded) == set(tensors)
    for name in tensors:
        assert loaded[name].dtype == tensors[name].dtype
        assert loaded[name].shape == tensors[name].shape
        assert loaded[name].tobytes() == tensors[name].tobytes()


def test_container_layout(tmp_path):
    path = tmp_path / "m.ckpt"
    write_checkpoint(path, {"t": np.arange(3, dtype=np.float32)}, None)
    blob = path.read_bytes()
    assert blob[:4] == MAGIC == b"DARP"
    (version,) = struct.unpack("<I", blob[4:8])
    (hlen,) = struct.unpack("<Q", blob[8:16])
    header = json.loads(blob[16:16 + hlen])
    assert version == 1
    assert header["t"] == {"dtype": "f4", "shape": [3], "byte_offset": 0}
    payload = blob[16 + hlen:]
    assert np.frombuffer(payload, dtype="<f4").tolist() == [0.0, 1.0, 2.0]


def test_write_read_write_identical_bytes(tmp_path):
    rng = np.random.default_rng(1)
    tensors = {"x": rng.standard_normal(16).astype(np.float32)}
    p1, p2 = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
    write_checkpoint(p1, tensors, {"k": 1})
    loaded, meta = read_checkpoint(p1)
    write_checkpoint(p2, loaded, meta)
    assert p1.read_bytes() == p2.read_bytes()


def test_missing_and_corrupt(tmp_path):
    with pytest.raises(CheckpointError):
        read_checkpoint(tmp_path / "nope.ckpt")
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"XXXX" + b"\0" * 16)
    with pytest.raises(CheckpointError, match="magic"):
        read_checkpoint(bad)

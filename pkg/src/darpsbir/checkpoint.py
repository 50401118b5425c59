"""Binary checkpoint container.

Layout: magic "DARP", u32 format version, u64 little-endian JSON header
length, the UTF-8 JSON header, then the raw little-endian float payload.
The header maps tensor name -> {dtype, shape, byte_offset}; the reserved
key "__meta__" carries free-form run metadata and is not a tensor entry.
Round-trips are bit-exact.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"DARP"
VERSION = 1

_DTYPES = {"f4": np.dtype("<f4"), "f8": np.dtype("<f8")}


class CheckpointError(IOError):
    pass


def write_checkpoint(path, tensors: dict[str, np.ndarray], meta: dict | None = None) -> None:
    header: dict[str, object] = {}
    payload = bytearray()
    offset = 0
    for name in sorted(tensors):
        arr = np.ascontiguousarray(tensors[name])
        if arr.dtype == np.float64:
            code = "f8"
        else:
            code = "f4"
            arr = arr.astype("<f4", copy=False)
        arr = arr.astype(_DTYPES[code], copy=False)
        header[name] = {"dtype": code, "shape": list(arr.shape), "byte_offset": offset}
        raw = arr.tobytes()
        payload.extend(raw)
        offset += len(raw)
    if meta is not None:
        header["__meta__"] = meta
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        fh.write(bytes(payload))


def read_checkpoint(path):
    """Returns (tensors, meta)."""
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint not found: {path}")
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != MAGIC:
            raise CheckpointError(f"bad magic in {path}: {magic!r}")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version}")
        (hlen,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(hlen).decode("utf-8"))
        payload = fh.read()
    meta = header.pop("__meta__", None)
    tensors = {}
    for name, rec in header.items():
        dt = _DTYPES[rec["dtype"]]
        shape = tuple(rec["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = rec["byte_offset"]
        end = start + count * dt.itemsize
        tensors[name] = np.frombuffer(payload[start:end], dtype=dt).reshape(shape).copy()
    return tensors, meta

"""Flat binary checkpoint of named float64 tensors.

Layout (all integers little-endian):

    bytes 0-3   magic "GRVL"
    byte  4     format version (currently 1)
    uint32      tensor count
    per tensor:
        uint16      name length in bytes
        bytes       name (UTF-8)
        uint8       ndim
        uint64*ndim dims
        float64*n   row-major values

Identical tensor dicts serialize to identical bytes.
"""

from __future__ import annotations

import struct

import numpy as np

__all__ = ["CheckpointError", "save_checkpoint", "load_checkpoint", "MAGIC", "VERSION"]

MAGIC = b"GRVL"
VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, tensors):
    """Write named arrays (a dict or (name, array) pairs) to `path`."""
    items = list(tensors.items()) if isinstance(tensors, dict) else list(tensors)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<B", VERSION))
        fh.write(struct.pack("<I", len(items)))
        for name, array in items:
            values = np.ascontiguousarray(array, dtype=np.float64)
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<B", values.ndim))
            for dim in values.shape:
                fh.write(struct.pack("<Q", dim))
            fh.write(values.astype("<f8").tobytes())


def _take(buf, offset, size, path, what):
    if offset + size > len(buf):
        raise CheckpointError(f"{path}: truncated while reading {what}")
    return buf[offset:offset + size], offset + size


def load_checkpoint(path):
    """Read a checkpoint back into an ordered {name: float64 array} dict."""
    with open(path, "rb") as fh:
        buf = fh.read()
    raw, off = _take(buf, 0, 4, path, "magic")
    if raw != MAGIC:
        raise CheckpointError(f"{path}: bad magic {raw!r}, expected {MAGIC!r}")
    raw, off = _take(buf, off, 1, path, "version")
    version = raw[0]
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    raw, off = _take(buf, off, 4, path, "tensor count")
    count = struct.unpack("<I", raw)[0]

    tensors: dict[str, np.ndarray] = {}
    for _ in range(count):
        raw, off = _take(buf, off, 2, path, "name length")
        name_len = struct.unpack("<H", raw)[0]
        raw, off = _take(buf, off, name_len, path, "name")
        name = raw.decode("utf-8")
        raw, off = _take(buf, off, 1, path, "ndim")
        ndim = raw[0]
        raw, off = _take(buf, off, 8 * ndim, path, "dims")
        shape = struct.unpack(f"<{ndim}Q", raw) if ndim else ()
        n_values = int(np.prod(shape)) if ndim else 1
        raw, off = _take(buf, off, 8 * n_values, path, "values")
        values = np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(shape)
        if name in tensors:
            raise CheckpointError(f"{path}: duplicate tensor name {name!r}")
        tensors[name] = values
    if off != len(buf):
        raise CheckpointError(f"{path}: {len(buf) - off} trailing bytes")
    return tensors

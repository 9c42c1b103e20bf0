"""Bit-exact binary field format and JSON manifests.

Layout (little-endian): magic ``MDWKB01\\0``, u32 rank, u64 dims[rank],
u8 dtype tag (1 = float64, 2 = complex128), u64 payload byte count, then the
raw row-major payload.  Errors name the offending byte offset.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import BadMagic, DimMismatch, TruncatedPayload

MAGIC = b"MDWKB01\x00"
_TAGS = {np.dtype("<f8"): 1, np.dtype("<c16"): 2}
_DTYPES = {1: np.dtype("<f8"), 2: np.dtype("<c16")}


def save_field(path, field: np.ndarray) -> None:
    arr = np.ascontiguousarray(field)
    if arr.dtype == np.float32 or arr.dtype == np.float64:
        arr = arr.astype("<f8", copy=False)
    elif np.iscomplexobj(arr):
        arr = arr.astype("<c16", copy=False)
    else:
        arr = arr.astype("<f8")
    tag = _TAGS[arr.dtype]
    payload = arr.tobytes()
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", arr.ndim))
        f.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        f.write(struct.pack("<B", tag))
        f.write(struct.pack("<Q", len(payload)))
        f.write(payload)


def load_field(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if data[:8] != MAGIC:
        raise BadMagic(f"bad magic at offset 0: {data[:8]!r}")
    off = 8
    if len(data) < off + 4:
        raise TruncatedPayload(f"file ends at {len(data)}, rank field needs offset {off + 4}")
    (rank,) = struct.unpack_from("<I", data, off)
    off += 4
    if rank > 32:
        raise DimMismatch(f"implausible rank {rank} at offset 8")
    need = off + 8 * rank
    if len(data) < need:
        raise TruncatedPayload(f"file ends at {len(data)}, dims need offset {need}")
    dims = struct.unpack_from(f"<{rank}Q", data, off)
    off += 8 * rank
    if len(data) < off + 1 + 8:
        raise TruncatedPayload(f"file ends at {len(data)}, header needs offset {off + 9}")
    (tag,) = struct.unpack_from("<B", data, off)
    off += 1
    if tag not in _DTYPES:
        raise DimMismatch(f"unknown dtype tag {tag} at offset {off - 1}")
    (nbytes,) = struct.unpack_from("<Q", data, off)
    off += 8
    dt = _DTYPES[tag]
    expect = int(np.prod(dims, dtype=np.int64)) * dt.itemsize if rank else dt.itemsize
    if nbytes != expect:
        raise DimMismatch(
            f"payload length {nbytes} at offset {off - 8} disagrees with dims {dims} ({expect})")
    if len(data) < off + nbytes:
        raise TruncatedPayload(
            f"payload truncated: expected {nbytes} bytes at offset {off}, have {len(data) - off}")
    arr = np.frombuffer(data[off:off + nbytes], dtype=dt)
    return arr.reshape(dims).copy()


def save_manifest(path, manifest: dict) -> None:
    Path(path).write_text(json.dumps(manifest, indent=2, sort_keys=True))


def load_manifest(path) -> dict:
    return json.loads(Path(path).read_text())

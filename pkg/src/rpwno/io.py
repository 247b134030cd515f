"""Little-endian binary container shared by dataset (RPWD) and checkpoint (RPWC) files.

Layout::

    magic        4 bytes ASCII
    version      u32
    meta_len     u64
    meta         meta_len bytes of UTF-8 JSON
    then, repeated until end of file:
      name_len   u32
      name       name_len bytes UTF-8
      rank       u32
      extents    rank x u64
      payload    prod(extents) x f64, row-major
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

FORMAT_VERSION = 1


class FormatError(ValueError):
    pass


def write_container(path, magic: bytes, meta: dict, tensors: dict[str, np.ndarray],
                    version: int = FORMAT_VERSION) -> None:
    if len(magic) != 4:
        raise ValueError("magic must be 4 bytes")
    blob = json.dumps(meta, sort_keys=True).encode("utf-8")
    path = Path(path)
    with path.open("wb") as fh:
        fh.write(magic)
        fh.write(struct.pack("<IQ", version, len(blob)))
        fh.write(blob)
        for name, arr in tensors.items():
            arr = np.require(arr, dtype="<f8", requirements="C")
            key = name.encode("utf-8")
            fh.write(struct.pack("<I", len(key)))
            fh.write(key)
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
            fh.write(arr.tobytes())


def read_container(path, magic: bytes) -> tuple[int, dict, dict[str, np.ndarray]]:
    data = Path(path).read_bytes()
    if data[:4] != magic:
        raise FormatError(f"{path}: bad magic {data[:4]!r}, expected {magic!r}")
    try:
        version, meta_len = struct.unpack_from("<IQ", data, 4)
        pos = 16
        meta = json.loads(data[pos:pos + meta_len].decode("utf-8"))
        pos += meta_len
        tensors = {}
        while pos < len(data):
            (name_len,) = struct.unpack_from("<I", data, pos)
            pos += 4
            name = data[pos:pos + name_len].decode("utf-8")
            pos += name_len
            (rank,) = struct.unpack_from("<I", data, pos)
            pos += 4
            shape = struct.unpack_from(f"<{rank}Q", data, pos)
            pos += 8 * rank
            count = int(np.prod(shape)) if rank else 1
            arr = np.frombuffer(data, dtype="<f8", count=count, offset=pos).reshape(shape)
            pos += 8 * count
            tensors[name] = arr.astype(np.float64)
    except (struct.error, ValueError) as exc:
        raise FormatError(f"{path}: truncated or corrupt container ({exc})") from exc
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported format version {version}")
    return version, meta, tensors

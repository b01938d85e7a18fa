"""Versioned binary checkpoint format.

Layout (all little-endian):
    magic   b"PCCK"
    u16     format version (1)
    u32     config blob length, then UTF-8 JSON config/metadata
    repeated until EOF, one record per array:
        u16     name length, then UTF-8 name
        u8      shape rank
        u32*    dims
        f32*    row-major data
"""
from __future__ import annotations

import io
import json
import struct
from pathlib import Path

import numpy as np

from ..errors import BadMagic, TruncatedFile

MAGIC = b"PCCK"
VERSION = 1


def save_checkpoint(path, config: dict, arrays: dict[str, np.ndarray]) -> None:
    blob = json.dumps(config, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<H", VERSION))
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        for name, arr in arrays.items():
            nb = name.encode("utf-8")
            f.write(struct.pack("<H", len(nb)))
            f.write(nb)
            f.write(struct.pack("<B", arr.ndim))
            for dim in arr.shape:
                f.write(struct.pack("<I", dim))
            f.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def _read_exact(f, n: int, what: str) -> bytes:
    buf = f.read(n)
    if len(buf) != n:
        raise TruncatedFile(f"checkpoint ended while reading {what}")
    return buf


def load_checkpoint(path) -> tuple[dict, dict[str, np.ndarray]]:
    data = Path(path).read_bytes()
    f = io.BytesIO(data)
    magic = f.read(4)
    if len(magic) < 4 or magic != MAGIC:
        raise BadMagic(f"not a checkpoint file: magic {magic!r}")
    (version,) = struct.unpack("<H", _read_exact(f, 2, "version"))
    if version != VERSION:
        raise BadMagic(f"unsupported checkpoint version {version}")
    (blob_len,) = struct.unpack("<I", _read_exact(f, 4, "config length"))
    config = json.loads(_read_exact(f, blob_len, "config blob").decode("utf-8"))
    arrays: dict[str, np.ndarray] = {}
    while True:
        head = f.read(2)
        if len(head) == 0:
            break
        if len(head) < 2:
            raise TruncatedFile("checkpoint ended inside a record header")
        (name_len,) = struct.unpack("<H", head)
        name = _read_exact(f, name_len, "array name").decode("utf-8")
        (rank,) = struct.unpack("<B", _read_exact(f, 1, "rank"))
        dims = struct.unpack(f"<{rank}I", _read_exact(f, 4 * rank, "dims")) if rank else ()
        count = int(np.prod(dims)) if rank else 1
        raw = _read_exact(f, 4 * count, f"data of {name}")
        arrays[name] = np.frombuffer(raw, dtype="<f4").reshape(dims).copy()
    return config, arrays

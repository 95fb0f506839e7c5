"""File helpers: atomic writes and little-endian binary headers."""
from __future__ import annotations

import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from vexel.errors import BadMagic, ShapeMismatch


def atomic_write(path: str | Path, data: bytes | str):
    """Write via a sibling temp file and ``os.replace``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(data, str):
        data = data.encode("utf-8")
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def pack_grid(magic: bytes, array: np.ndarray) -> bytes:
    """``magic``, u32 rows, u32 cols, then row-major f32 little-endian data."""
    a = np.asarray(array)
    if a.ndim != 2:
        raise ShapeMismatch(f"expected a 2-d array, got shape {a.shape}")
    return magic + struct.pack("<II", *a.shape) + a.astype("<f4").tobytes()


def unpack_grid(magic: bytes, data: bytes) -> np.ndarray:
    head = len(magic) + 8
    if len(data) < head or data[: len(magic)] != magic:
        raise BadMagic(f"expected {magic.decode()} header")
    rows, cols = struct.unpack_from("<II", data, len(magic))
    body = data[head:]
    if len(body) != rows * cols * 4:
        raise BadMagic(f"payload holds {len(body)} bytes, header promises {rows}x{cols} floats")
    return np.frombuffer(body, dtype="<f4").reshape(rows, cols).astype(np.float64)

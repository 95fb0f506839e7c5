"""Named-tensor checkpoint files with a JSON config header.

Layout (little-endian): ``VXC1``, u32 config length, UTF-8 JSON config,
u32 tensor count, then per tensor: u32 name length, name, u32 ndim,
ndim x u32 dims, f32 data.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from vexel.errors import BadCheckpoint, BadMagic, IncompatibleCheckpoints
from vexel.io import atomic_write

MAGIC = b"VXC1"


def encode_checkpoint(tensors: dict[str, np.ndarray], config: dict) -> bytes:
    head = json.dumps(config, sort_keys=True).encode("utf-8")
    parts = [MAGIC, struct.pack("<I", len(head)), head, struct.pack("<I", len(tensors))]
    for name in sorted(tensors):
        a = np.asarray(tensors[name])
        raw = name.encode("utf-8")
        parts += [struct.pack("<I", len(raw)), raw, struct.pack("<I", a.ndim),
                  struct.pack(f"<{a.ndim}I", *a.shape), np.ascontiguousarray(a, dtype="<f4").tobytes()]
    return b"".join(parts)


def decode_checkpoint(data: bytes) -> tuple[dict, dict[str, np.ndarray]]:
    if data[:4] != MAGIC:
        raise BadMagic("not a VXC1 checkpoint")
    try:
        pos = 4
        (n,) = struct.unpack_from("<I", data, pos)
        pos += 4
        config = json.loads(data[pos:pos + n].decode("utf-8"))
        pos += n
        (count,) = struct.unpack_from("<I", data, pos)
        pos += 4
        tensors = {}
        for _ in range(count):
            (ln,) = struct.unpack_from("<I", data, pos)
            pos += 4
            name = data[pos:pos + ln].decode("utf-8")
            pos += ln
            (ndim,) = struct.unpack_from("<I", data, pos)
            pos += 4
            dims = struct.unpack_from(f"<{ndim}I", data, pos)
            pos += 4 * ndim
            size = int(np.prod(dims)) if dims else 1
            if pos + 4 * size > len(data):
                raise BadCheckpoint(f"tensor {name} is truncated")
            tensors[name] = np.frombuffer(data, dtype="<f4", count=size, offset=pos).reshape(dims).astype(np.float64)
            pos += 4 * size
    except (struct.error, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise BadCheckpoint(f"corrupt checkpoint: {exc}") from exc
    if pos != len(data):
        raise BadCheckpoint("trailing bytes after the last tensor")
    return config, tensors


def save_checkpoint(path: str | Path, tensors: dict[str, np.ndarray], config: dict):
    atomic_write(path, encode_checkpoint(tensors, config))


def load_checkpoint(path: str | Path, expected_config: dict | None = None,
                    required: list[str] | None = None) -> tuple[dict, dict[str, np.ndarray]]:
    """Read a checkpoint, optionally checking config keys and tensor names."""
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise BadCheckpoint(f"cannot read checkpoint {path}: {exc}") from exc
    config, tensors = decode_checkpoint(data)
    if expected_config:
        diff = {k: (config.get(k), v) for k, v in expected_config.items() if config.get(k) != v}
        if diff:
            raise IncompatibleCheckpoints(f"config mismatch: {diff}")
    missing = [name for name in (required or []) if name not in tensors]
    if missing:
        raise BadCheckpoint(f"missing tensors: {', '.join(missing)}")
    return config, tensors

"""Pixel-feature and text-embedding producers.

The stubs are deterministic stand-ins for pretrained encoders. Real features
computed offline can be imported through the ``.vxf`` format instead.
"""
from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from vexel.errors import NonSquareGrid, ShapeMismatch
from vexel.io import atomic_write, pack_grid, unpack_grid
from vexel.raster import RasterGrid, rasterize
from vexel.svg.model import Document
from vexel.svg.serialize import serialize_svg

PATCH_GRID = 16
VXF_MAGIC = b"VXF1"
LUMA = np.array([0.299, 0.587, 0.114])


def patch_statistics(pixels: np.ndarray) -> np.ndarray:
    """Per-patch (3 means, 3 stds, 2 gradient energies), row-major patches."""
    size = pixels.shape[0]
    out = np.zeros((PATCH_GRID * PATCH_GRID, 8))
    rows = np.array_split(np.arange(size), PATCH_GRID)
    for i, ri in enumerate(rows):
        for j, cj in enumerate(rows):
            patch = pixels[ri[0]:ri[-1] + 1, cj[0]:cj[-1] + 1] if len(ri) and len(cj) else np.ones((1, 1, 3))
            flat = patch.reshape(-1, 3)
            lum = patch @ LUMA
            gx = np.mean(np.diff(lum, axis=1) ** 2) if lum.shape[1] > 1 else 0.0
            gy = np.mean(np.diff(lum, axis=0) ** 2) if lum.shape[0] > 1 else 0.0
            out[i * PATCH_GRID + j] = [*flat.mean(axis=0), *flat.std(axis=0), gx, gy]
    return out


def resample_tokens(tokens: np.ndarray, n: int) -> np.ndarray:
    """Nearest-neighbour resampling along the token axis to length ``n``."""
    k = tokens.shape[0]
    idx = np.floor((np.arange(n) + 0.5) * k / n).astype(np.int64)
    return tokens[np.minimum(idx, k - 1)]


def extract_stub_features(grid: RasterGrid, d_p: int = 64, n: int = 1024) -> np.ndarray:
    """Deterministic ``n x d_p`` pixel features from a rendered grid."""
    if grid.width != grid.height:
        raise NonSquareGrid(f"grid is {grid.width}x{grid.height}")
    stats = patch_statistics(grid.pixels)
    reps = -(-d_p // stats.shape[1])
    tiled = np.tile(stats, (1, reps))[:, :d_p]
    return resample_tokens(tiled, n)


def save_features(path: str | Path, tokens: np.ndarray):
    atomic_write(path, pack_grid(VXF_MAGIC, tokens))


def load_features(path: str | Path, rows: int | None = None, cols: int | None = None) -> np.ndarray:
    """Load a ``.vxf`` file, checking the shape when ``rows``/``cols`` are given."""
    tokens = unpack_grid(VXF_MAGIC, Path(path).read_bytes())
    if (rows is not None and tokens.shape[0] != rows) or (cols is not None and tokens.shape[1] != cols):
        raise ShapeMismatch(f"features are {tokens.shape}, expected ({rows}, {cols})")
    return tokens


def cache_dir() -> Path | None:
    value = os.environ.get("VEXEL_CACHE")
    return Path(value) if value else None


def document_features(doc: Document, d_p: int, n: int, size: int = 128,
                      cache: Path | None = None) -> np.ndarray:
    """Stub features of ``doc``'s render, cached by content hash when possible."""
    cache = cache if cache is not None else cache_dir()
    path = None
    if cache is not None:
        key = hashlib.sha256(f"{d_p}:{n}:{size}:".encode() + serialize_svg(doc).encode()).hexdigest()
        path = Path(cache) / f"{key[:32]}.vxf"
        if path.exists():
            return load_features(path, n, d_p)
    # rounded to f32 so cached and uncached runs see identical inputs
    feats = extract_stub_features(rasterize(doc, size), d_p, n).astype(np.float32).astype(np.float64)
    if path is not None:
        save_features(path, feats)
    return feats


@dataclass(frozen=True)
class TextEmbedding:
    tokens: np.ndarray  # (T_txt, D_txt)
    null: bool = False

    @classmethod
    def null_embedding(cls, t_txt: int, d_txt: int) -> TextEmbedding:
        return cls(np.zeros((t_txt, d_txt)), True)


def word_vector(word: str, d_txt: int) -> np.ndarray:
    seed = int.from_bytes(hashlib.sha256(word.encode("utf-8")).digest()[:8], "little")
    v = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed))).standard_normal(d_txt)
    # unit variance per channel, the scale of a layer-normalized encoder output
    return v * (np.sqrt(d_txt) / np.linalg.norm(v))


def embed_text_stub(prompt: str, d_txt: int = 64, t_txt: int = 8) -> TextEmbedding:
    """Hash each whitespace-separated word to a vector of norm sqrt(d_txt); pad with zeros."""
    words = prompt.split()
    if not words:
        return TextEmbedding.null_embedding(t_txt, d_txt)
    tokens = np.zeros((t_txt, d_txt))
    for i, w in enumerate(words[:t_txt]):
        tokens[i] = word_vector(w, d_txt)
    return TextEmbedding(tokens, False)

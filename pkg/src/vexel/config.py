"""Typed, versioned model configurations.

Config files are JSON objects. Unknown keys are rejected, missing keys take
the defaults below, and the fully resolved config is what gets stored in
checkpoint headers.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from vexel.errors import ConfigError

VAE_SCHEMA = "vexel.vae/1"
DIT_SCHEMA = "vexel.dit/1"


@dataclass(frozen=True)
class VAEConfig:
    schema: str = VAE_SCHEMA
    n: int = 1024
    canvas: int = 128
    d_e: int = 256
    d_p: int = 64
    d_z: int = 16
    d_tok: int = 32
    heads: int = 4
    layers: int = 4
    ff_dim: int = 512
    stages: int = 8
    kl_weight: float = 1e-4
    mse_space: str = "embedding"
    render_size: int = 128
    warmup: int = 2000
    peak_lr: float = 3e-4
    floor_lr: float = 1.5e-5
    weight_decay: float = 0.1
    clip_norm: float = 2.0
    seed_tables: int = 0

    def __post_init__(self):
        if self.d_e % self.heads:
            raise ConfigError(f"d_e={self.d_e} is not divisible by heads={self.heads}")
        if (self.d_e // self.heads) % 2:
            raise ConfigError("per-head width must be even for rotary embeddings")
        if self.layers < 1 or self.stages < 1:
            raise ConfigError("layers and stages must be >= 1")
        if 2 * self.d_tok + 12 > self.d_e:
            raise ConfigError(f"2*d_tok+12 = {2 * self.d_tok + 12} exceeds d_e = {self.d_e}")
        if self.mse_space not in ("embedding", "matrix"):
            raise ConfigError(f"mse_space must be 'embedding' or 'matrix', not {self.mse_space!r}")


VAE_PRESETS = {
    "default": {},
    "tiny": dict(n=32, d_e=64, d_p=64, d_z=8, d_tok=16, heads=4, layers=2, ff_dim=128, stages=4,
                 warmup=200, peak_lr=2e-3, floor_lr=1e-4),
}

# Table of VS-DiT sizes: (blocks, hidden, heads).
DIT_PRESETS = {
    "tiny": (2, 64, 2),
    "S": (12, 384, 6),
    "B": (12, 768, 12),
    "L": (24, 1024, 16),
}


@dataclass(frozen=True)
class DiTConfig:
    schema: str = DIT_SCHEMA
    preset: str = "tiny"
    blocks: int = 2
    d: int = 64
    heads: int = 2
    ff_mult: int = 4
    n: int = 1024
    d_z: int = 16
    d_txt: int = 64
    t_txt: int = 8
    t_diff: int = 1000
    beta_start: float = 1e-4
    beta_end: float = 0.02
    cond_dropout: float = 0.1
    guidance: float = 4.0
    sample_steps: int = 100
    batch: int = 8
    warmup: int = 2000
    peak_lr: float = 3e-4
    floor_lr: float = 1.5e-5
    weight_decay: float = 0.1
    clip_norm: float = 2.0
    ema_decay: float = 0.9999
    clip_x0: bool = True

    def __post_init__(self):
        if not 0.0 <= self.ema_decay < 1.0:
            raise ConfigError("ema_decay must be in [0, 1)")
        if self.d % self.heads:
            raise ConfigError(f"d={self.d} is not divisible by heads={self.heads}")
        if (self.d // self.heads) % 2:
            raise ConfigError("per-head width must be even for rotary embeddings")
        if not 1 <= self.sample_steps <= self.t_diff:
            raise ConfigError("sample_steps must be in [1, t_diff]")
        if not 0.0 <= self.cond_dropout <= 1.0:
            raise ConfigError("cond_dropout must be a probability")


DIT_TRAINING_DEFAULTS = {
    "tiny": dict(warmup=200, peak_lr=1e-3, floor_lr=5e-5, ema_decay=0.999),
}


def _check_keys(cls, data: dict):
    names = {f.name for f in fields(cls)}
    for key in data:
        if key not in names and key != "preset":
            raise ConfigError(f"unknown config key {key!r}")


def vae_config(data: dict | None = None) -> VAEConfig:
    """Resolve a VAE config dict; ``preset`` selects a base of defaults."""
    data = dict(data or {})
    preset = data.pop("preset", "default")
    if preset not in VAE_PRESETS:
        raise ConfigError(f"unknown VAE preset {preset!r}")
    _check_keys(VAEConfig, data)
    schema = data.get("schema", VAE_SCHEMA)
    if schema != VAE_SCHEMA:
        raise ConfigError(f"unsupported schema {schema!r}, expected {VAE_SCHEMA!r}")
    try:
        return VAEConfig(**{**VAE_PRESETS[preset], **data})
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def dit_config(data: dict | None = None) -> DiTConfig:
    """Resolve a DiT config dict; ``preset`` fills blocks/d/heads from the size table."""
    data = dict(data or {})
    preset = data.get("preset", "tiny")
    if preset not in DIT_PRESETS:
        raise ConfigError(f"unknown DiT preset {preset!r}")
    _check_keys(DiTConfig, data)
    schema = data.get("schema", DIT_SCHEMA)
    if schema != DIT_SCHEMA:
        raise ConfigError(f"unsupported schema {schema!r}, expected {DIT_SCHEMA!r}")
    blocks, d, heads = DIT_PRESETS[preset]
    base = dict(preset=preset, blocks=blocks, d=d, heads=heads, **DIT_TRAINING_DEFAULTS.get(preset, {}))
    try:
        return DiTConfig(**{**base, **data})
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(source: str | Path | dict | None, kind: str):
    """Load a ``vae`` or ``dit`` config from a path, preset name or dict."""
    if isinstance(source, dict) or source is None:
        data = source or {}
    elif kind == "dit" and str(source) in DIT_PRESETS:
        data = {"preset": str(source)}
    elif kind == "vae" and str(source) in VAE_PRESETS:
        data = {"preset": str(source)}
    else:
        try:
            data = json.loads(Path(source).read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"cannot read config {source}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {source} is not valid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
    if kind == "vae":
        return vae_config(data)
    if kind == "dit":
        return dit_config(data)
    raise ConfigError(f"unknown config kind {kind!r}")


def to_dict(cfg) -> dict:
    return asdict(cfg)

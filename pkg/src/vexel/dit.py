"""Vector-space diffusion transformer with text cross-attention.

Blocks use adaLN-zero time conditioning: a zero-initialized linear map of
the time embedding yields shift, scale and gate for the self-attention and
feed-forward sublayers. Text enters through an ungated cross-attention
sublayer placed between them.
"""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from vexel.conditioning import TextEmbedding, embed_text_stub
from vexel.config import DiTConfig, dit_config, to_dict
from vexel.errors import BadCheckpoint, IncompatibleCheckpoints, NonFiniteLoss, ShapeMismatch
from vexel.nn import tensor as T
from vexel.nn.checkpoint import load_checkpoint, save_checkpoint
from vexel.nn.layers import MLP, LayerNorm, Linear, Module, MultiHeadAttention
from vexel.nn.optim import AdamW, clip_grad_norm, lr_schedule
from vexel.nn.rng import make_rng
from vexel.nn.tensor import Parameter, Tensor
from vexel.svg.model import Document


@dataclass(frozen=True)
class NoiseSchedule:
    """Variance-preserving linear-beta schedule indexed by t = 0..T.

    ``alpha[0] = 1`` and ``sigma[0] = 0`` (clean data); steps 1..T use
    betas spaced linearly from ``beta_start`` to ``beta_end``.
    """

    alpha: np.ndarray
    sigma: np.ndarray

    @classmethod
    def linear(cls, t_diff: int = 1000, beta_start: float = 1e-4, beta_end: float = 0.02) -> NoiseSchedule:
        betas = np.linspace(beta_start, beta_end, t_diff)
        abar = np.concatenate([[1.0], np.cumprod(1.0 - betas)])
        return cls(np.sqrt(abar), np.sqrt(1.0 - abar))

    @property
    def steps(self) -> int:
        return len(self.alpha) - 1


def q_sample(z, t, eps, schedule: NoiseSchedule):
    """``z_t = alpha_t z + sigma_t eps`` with ``t`` an int or per-example array."""
    t = np.asarray(t)
    shape = t.shape + (1,) * (np.ndim(z) - t.ndim)
    a = schedule.alpha[t].reshape(shape)
    s = schedule.sigma[t].reshape(shape)
    return a * np.asarray(z) + s * np.asarray(eps)


def timestep_embedding(t: np.ndarray, dim: int, max_period: float = 10000.0) -> np.ndarray:
    """Sinusoidal embedding of integer timesteps, shape (len(t), dim)."""
    half = dim // 2
    freqs = np.exp(-math.log(max_period) * np.arange(half) / half)
    args = np.asarray(t, dtype=np.float64)[:, None] * freqs[None, :]
    emb = np.concatenate([np.cos(args), np.sin(args)], axis=1)
    return np.pad(emb, ((0, 0), (0, dim - 2 * half)))


def position_table(n: int, dim: int) -> np.ndarray:
    """Fixed sinusoidal absolute positions; RoPE alone only sees offsets."""
    return timestep_embedding(np.arange(n), dim)


def _modulate(x: Tensor, shift: Tensor, scale: Tensor) -> Tensor:
    return x * (scale + 1.0) + shift


class DiTBlock(Module):
    def __init__(self, d: int, heads: int, ff_mult: int, rng=None):
        self.d = d
        self.norm1 = LayerNorm(d, rng, affine=False)
        self.attn = MultiHeadAttention(d, heads, rng, rope=True)
        self.cross_norm = LayerNorm(d, rng)
        # no key/value/output bias: an all-zero text context gives a zero branch
        self.cross_attn = MultiHeadAttention(d, heads, rng, kv_bias=False)
        self.norm2 = LayerNorm(d, rng, affine=False)
        self.mlp = MLP(d, ff_mult * d, rng)
        self.ada = Linear(d, 6 * d, rng, zero=True)

    def forward(self, x: Tensor, c: Tensor, text: Tensor) -> Tensor:
        if x.ndim != 3 or x.shape[-1] != self.d:
            raise ShapeMismatch(f"block expects (batch, tokens, {self.d}), got {x.shape}")
        b = x.shape[0]
        mod = self.ada(T.silu(c)).reshape(b, 1, 6 * self.d)
        shift1, scale1, gate1, shift2, scale2, gate2 = (
            mod[:, :, i * self.d:(i + 1) * self.d] for i in range(6))
        x = x + gate1 * self.attn(_modulate(self.norm1(x), shift1, scale1))
        x = x + self.cross_attn(self.cross_norm(x), text)
        return x + gate2 * self.mlp(_modulate(self.norm2(x), shift2, scale2))


BUFFERS = ("latent_scale", "x0_bound")


class VSDiT(Module):
    def __init__(self, cfg: DiTConfig, rng=None):
        self.cfg = cfg
        d = cfg.d
        self.in_proj = Linear(cfg.d_z, d, rng)
        self.t_fc1 = Linear(d, d, rng)
        self.t_fc2 = Linear(d, d, rng)
        self.text_proj = Linear(cfg.d_txt, d, rng, bias=False)
        self.blocks = [DiTBlock(d, cfg.heads, cfg.ff_mult, rng) for _ in range(cfg.blocks)]
        self.final_norm = LayerNorm(d, rng)
        self.out_proj = Linear(d, cfg.d_z, rng)
        self.latent_scale = Parameter(np.ones(()) if rng is not None else np.broadcast_to(1.0, ()))
        # largest |scaled latent| seen in training; 0 disables x0 clipping
        self.x0_bound = Parameter(np.zeros(()) if rng is not None else np.broadcast_to(0.0, ()))
        self.calls: Counter[str] = Counter()

    @classmethod
    def init(cls, cfg: DiTConfig, seed: int = 0) -> VSDiT:
        return cls(cfg, make_rng(seed, "dit-init"))

    @classmethod
    def shape_only(cls, cfg: DiTConfig) -> VSDiT:
        """Instantiate parameter shapes without allocating weights."""
        return cls(cfg, None)

    def trainable(self) -> list[Parameter]:
        return [p for name, p in self.named_parameters() if name not in BUFFERS]


def predict_noise(z_t, t, text, model: VSDiT, null: bool | None = None) -> Tensor:
    """Noise estimate for latents ``z_t`` (B, N, D_z) at integer steps ``t``."""
    cfg = model.cfg
    z = T.as_tensor(z_t)
    if z.ndim == 2:
        z = z.reshape(1, *z.shape)
    if z.ndim != 3 or z.shape[-1] != cfg.d_z:
        raise ShapeMismatch(f"latent must be (B, N, {cfg.d_z}), got {z.shape}")
    b = z.shape[0]
    tokens = text.tokens if isinstance(text, TextEmbedding) else np.asarray(text)
    if tokens.ndim == 2:
        tokens = np.broadcast_to(tokens, (b, *tokens.shape))
    if tokens.shape[-1] != cfg.d_txt:
        raise ShapeMismatch(f"text width {tokens.shape[-1]} != {cfg.d_txt}")
    if null is None:
        null = isinstance(text, TextEmbedding) and text.null
    model.calls["uncond" if null else "cond"] += 1
    t = np.broadcast_to(np.asarray(t), (b,))
    c = model.t_fc2(T.silu(model.t_fc1(timestep_embedding(t, cfg.d))))
    h = model.in_proj(z) + position_table(z.shape[1], cfg.d)
    ctx = model.text_proj(tokens)
    for block in model.blocks:
        h = block(h, c, ctx)
    return model.out_proj(model.final_norm(h))


def condition_dropout_mask(rng: np.random.Generator, size: int, p: float) -> np.ndarray:
    """True where the text condition is replaced by the null embedding."""
    return rng.random(size) < p


def dit_loss(latents: np.ndarray, texts: np.ndarray, schedule: NoiseSchedule, model: VSDiT,
             rng: np.random.Generator, p_drop: float | None = None) -> Tensor:
    """Eq.-style epsilon-prediction loss with seeded condition dropout."""
    p_drop = model.cfg.cond_dropout if p_drop is None else p_drop
    b = latents.shape[0]
    t = rng.integers(1, schedule.steps + 1, size=b)
    eps = rng.standard_normal(latents.shape)
    drop = condition_dropout_mask(rng, b, p_drop)
    texts = np.where(drop[:, None, None], 0.0, texts)
    z_t = q_sample(latents, t, eps, schedule)
    diff = predict_noise(z_t, t, texts, model, null=bool(drop.all())) - eps
    return (diff * diff).mean()


def cfg_noise(eps_cond, eps_uncond, w: float):
    """Classifier-free guidance ``eps_u + w (eps_c - eps_u)``.

    Evaluated as ``(1 - w) eps_u + w eps_c`` so w = 0 and w = 1 return the
    unconditional and conditional estimates bit for bit.
    """
    return (1.0 - w) * eps_uncond + w * eps_cond


def ddim_timesteps(t_diff: int, steps: int) -> list[int]:
    """Uniformly strided descending timesteps ending at 0."""
    stride = t_diff / steps
    ts = [int(round(t_diff - i * stride)) for i in range(steps)]
    return ts + [0]


def ddim_sample(model: VSDiT, text: TextEmbedding, steps: int = 100, w: float = 4.0, seed: int = 0,
                schedule: NoiseSchedule | None = None) -> np.ndarray:
    """Deterministic DDIM trajectory from seeded noise; returns scaled-back z0 (N, D_z)."""
    cfg = model.cfg
    schedule = schedule or NoiseSchedule.linear(cfg.t_diff, cfg.beta_start, cfg.beta_end)
    if not 1 <= steps <= schedule.steps:
        raise ValueError(f"steps must be in [1, {schedule.steps}]")
    z = make_rng(seed, "ddim").standard_normal((1, cfg.n, cfg.d_z))
    null = TextEmbedding.null_embedding(*text.tokens.shape)
    ts = ddim_timesteps(schedule.steps, steps)
    bound = float(model.x0_bound.data) if cfg.clip_x0 else 0.0
    with T.no_grad():
        for t, t_prev in zip(ts[:-1], ts[1:]):
            eps = predict_noise(z, t, text, model).data
            if w != 1.0:
                eps = cfg_noise(eps, predict_noise(z, t, null, model).data, w)
            x0 = (z - schedule.sigma[t] * eps) / schedule.alpha[t]
            if bound > 0.0:
                # keep the clean estimate inside the data range, then re-derive eps
                x0 = np.clip(x0, -bound, bound)
                eps = (z - schedule.alpha[t] * x0) / schedule.sigma[t]
            z = schedule.alpha[t_prev] * x0 + schedule.sigma[t_prev] * eps
    return z[0] / float(model.latent_scale.data)


@dataclass
class DiTTrainResult:
    model: VSDiT
    trace: list[tuple[int, float, float]] = field(default_factory=list)


def train_dit(latents: np.ndarray, texts: np.ndarray, cfg: DiTConfig, steps: int, seed: int = 0,
              log_every: int = 0, log=print) -> DiTTrainResult:
    """Fit the noise predictor on fixed latents (K, N, D_z) with texts (K, T_txt, D_txt)."""
    if latents.shape[1:] != (cfg.n, cfg.d_z):
        raise ShapeMismatch(f"latents {latents.shape[1:]} do not match (N, D_z) = ({cfg.n}, {cfg.d_z})")
    model = VSDiT.init(cfg, seed)
    scale = 1.0 / max(float(np.std(latents)), 1e-8)
    model.latent_scale.data = np.array(scale)
    data = latents * scale
    model.x0_bound.data = np.array(float(np.max(np.abs(data))))
    schedule = NoiseSchedule.linear(cfg.t_diff, cfg.beta_start, cfg.beta_end)
    params = model.trainable()
    opt = AdamW(params, weight_decay=cfg.weight_decay)
    rng = make_rng(seed, "dit-train")
    ema = [p.data.copy() for p in params]
    trace = []
    k = len(data)
    for step in range(1, steps + 1):
        idx = rng.integers(k, size=cfg.batch) if cfg.batch != k else np.arange(k)
        for p in params:
            p.grad = None
        loss = dit_loss(data[idx], texts[idx], schedule, model, rng)
        value = loss.item()
        if not math.isfinite(value):
            raise NonFiniteLoss(f"non-finite DiT loss at step {step}")
        loss.backward()
        grads, _ = clip_grad_norm([p.grad for p in params], cfg.clip_norm)
        lr = lr_schedule(step, steps, cfg.warmup, cfg.peak_lr, cfg.floor_lr)
        opt.step(grads, lr)
        if cfg.ema_decay:
            # warm-started decay so early weights are forgotten quickly
            d = min(cfg.ema_decay, (1.0 + step) / (10.0 + step))
            for e, p in zip(ema, params):
                e *= d
                e += (1.0 - d) * p.data
        trace.append((step, lr, value))
        if log_every and step % log_every == 0:
            log(f"step {step} lr {lr:.3g} loss {value:.4f}")
    if cfg.ema_decay:
        for e, p in zip(ema, params):
            p.data = e
    model.calls.clear()
    return DiTTrainResult(model, trace)


def save_dit(path: str | Path, model: VSDiT):
    save_checkpoint(path, {"dit." + k: v for k, v in model.state_dict().items()},
                    {"kind": "dit", **to_dict(model.cfg)})


def load_dit(path: str | Path) -> VSDiT:
    config, tensors = load_checkpoint(path)
    if config.pop("kind", None) != "dit":
        raise BadCheckpoint(f"{path} is not a DiT checkpoint")
    model = VSDiT.init(dit_config(config), 0)
    model.load_state_dict({k[4:]: v for k, v in tensors.items() if k.startswith("dit.")})
    return model


def check_compatible(vae_cfg, dit_cfg: DiTConfig):
    if (vae_cfg.n, vae_cfg.d_z) != (dit_cfg.n, dit_cfg.d_z):
        raise IncompatibleCheckpoints(
            f"VAE has (N, D_z) = ({vae_cfg.n}, {vae_cfg.d_z}) but DiT expects ({dit_cfg.n}, {dit_cfg.d_z})")


def text_to_svg(prompt: str, vae, dit: VSDiT, w: float = 4.0, seed: int = 0, steps: int = 100) -> Document:
    """Text prompt to normalized Document: embed, sample, decode, unembed."""
    from vexel.vae import latent_to_document

    model, tables = vae
    check_compatible(model.cfg, dit.cfg)
    text = embed_text_stub(prompt, dit.cfg.d_txt, dit.cfg.t_txt)
    z0 = ddim_sample(dit, text, steps, w, seed)
    doc, _ = latent_to_document(z0, model, tables)
    return doc

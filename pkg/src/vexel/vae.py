"""Vector-pixel fusion VAE.

The encoder lets SVG tokens query pixel-feature tokens through one
cross-attention layer, then runs a stack of rotary self-attention blocks and
predicts a per-token Gaussian posterior. The decoder mirrors the self-attention
stack without cross-attention and maps latents back to embedding space.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from vexel.codec import (
    EOS,
    EmbedTables,
    decode_matrix,
    embed,
    encode_matrix,
    normalize_continuous,
    token_accuracy,
    unembed,
    unembed_features,
)
from vexel.conditioning import document_features
from vexel.config import VAEConfig
from vexel.errors import EmptyDocument, NonFiniteLoss, ShapeMismatch
from vexel.nn import tensor as T
from vexel.nn.checkpoint import load_checkpoint, save_checkpoint
from vexel.nn.layers import MLP, LayerNorm, Linear, Module, MultiHeadAttention
from vexel.nn.optim import AdamW, clip_grad_norm, lr_schedule
from vexel.nn.rng import make_rng
from vexel.nn.tensor import Parameter, Tensor
from vexel.svg.model import Document

LOGVAR_RANGE = (-20.0, 4.0)


class Block(Module):
    """Pre-norm transformer block with rotary self-attention."""

    def __init__(self, d: int, heads: int, ff: int, rng=None):
        self.norm1 = LayerNorm(d, rng)
        self.attn = MultiHeadAttention(d, heads, rng, rope=True)
        self.norm2 = LayerNorm(d, rng)
        self.mlp = MLP(d, ff, rng)

    def forward(self, x):
        x = x + self.attn(self.norm1(x))
        return x + self.mlp(self.norm2(x))


class Encoder(Module):
    def __init__(self, cfg: VAEConfig, rng=None):
        d = cfg.d_e
        self.svg_in = Linear(d, d, rng)
        self.pix_in = Linear(cfg.d_p, d, rng)
        self.cross_norm = LayerNorm(d, rng)
        self.cross_attn = MultiHeadAttention(d, cfg.heads, rng)
        self.cross_ff_norm = LayerNorm(d, rng)
        self.cross_ff = MLP(d, cfg.ff_dim, rng)
        self.blocks = [Block(d, cfg.heads, cfg.ff_dim, rng) for _ in range(cfg.layers)]
        self.norm = LayerNorm(d, rng)
        self.mu = Linear(d, cfg.d_z, rng)
        self.logvar = Linear(d, cfg.d_z, rng)

    def forward(self, emb, pix):
        # SVG tokens are the queries, pixel tokens the keys and values
        h = self.svg_in(emb)
        h = h + self.cross_attn(self.cross_norm(h), self.pix_in(pix))
        h = h + self.cross_ff(self.cross_ff_norm(h))
        for block in self.blocks:
            h = block(h)
        h = self.norm(h)
        return self.mu(h), T.clip(self.logvar(h), *LOGVAR_RANGE)


class Decoder(Module):
    def __init__(self, cfg: VAEConfig, rng=None):
        d = cfg.d_e
        self.z_in = Linear(cfg.d_z, d, rng)
        self.pos = Parameter(np.broadcast_to(0.0, (cfg.n, d)) if rng is None else 0.02 * rng.standard_normal((cfg.n, d)))
        self.blocks = [Block(d, cfg.heads, cfg.ff_dim, rng) for _ in range(cfg.layers)]
        self.norm = LayerNorm(d, rng)
        self.out = Linear(d, d, rng)

    def forward(self, z):
        h = self.z_in(z) + self.pos
        for block in self.blocks:
            h = block(h)
        return self.out(self.norm(h))


class VPVAE(Module):
    def __init__(self, cfg: VAEConfig, rng=None):
        self.cfg = cfg
        self.encoder = Encoder(cfg, rng)
        self.decoder = Decoder(cfg, rng)

    @classmethod
    def init(cls, cfg: VAEConfig, seed: int = 0) -> VPVAE:
        return cls(cfg, make_rng(seed, "vae-init"))


@dataclass
class LatentCode:
    z: Tensor
    mu: Tensor
    logvar: Tensor


def _batched(x, width: int, name: str) -> Tensor:
    t = T.as_tensor(x)
    if t.ndim == 2:
        t = t.reshape(1, *t.shape)
    if t.ndim != 3 or t.shape[-1] != width:
        raise ShapeMismatch(f"{name} must be (N, {width}) or (B, N, {width}), got {t.shape}")
    return t


def fuse_encode(emb, pix, model: VPVAE, eps: np.ndarray | None = None,
                rng: np.random.Generator | None = None) -> LatentCode:
    """Encode SVG embeddings with pixel features into a sampled latent.

    ``eps`` fixes the reparameterization noise; otherwise it is drawn from
    ``rng``. Pass ``eps=0`` for the posterior mean.
    """
    cfg = model.cfg
    emb = _batched(emb, cfg.d_e, "SVG embedding")
    pix = _batched(pix, cfg.d_p, "pixel features")
    if emb.shape[:2] != pix.shape[:2] or emb.shape[1] != cfg.n:
        raise ShapeMismatch(f"embedding {emb.shape} and pixel features {pix.shape} disagree with N={cfg.n}")
    mu, logvar = model.encoder(emb, pix)
    if eps is None:
        eps = (rng or make_rng(0, "eps")).standard_normal(mu.shape)
    eps = np.broadcast_to(np.asarray(eps, dtype=np.float64), mu.shape)
    z = mu + T.exp(logvar * 0.5) * eps
    return LatentCode(z, mu, logvar)


def decode(z, model: VPVAE) -> Tensor:
    z = _batched(z, model.cfg.d_z, "latent")
    if z.shape[1] != model.cfg.n:
        raise ShapeMismatch(f"latent has {z.shape[1]} tokens, expected {model.cfg.n}")
    return model.decoder(z)


def vae_loss(recon, target, mu, logvar, kl_weight: float, mask) -> tuple[Tensor, dict[str, float]]:
    """Masked MSE plus ``kl_weight`` times the masked KL to N(0, I)."""
    recon, target = T.as_tensor(recon), T.as_tensor(target)
    mu, logvar = T.as_tensor(mu), T.as_tensor(logvar)
    if recon.shape != target.shape:
        raise ShapeMismatch(f"reconstruction {recon.shape} vs target {target.shape}")
    m = np.asarray(mask, dtype=np.float64).reshape(*mu.shape[:-1], 1)
    rows = max(float(m.sum()), 1.0)
    diff = recon - target
    mse = (diff * diff * m).sum() * (1.0 / (rows * recon.shape[-1]))
    kl_terms = mu * mu + T.exp(logvar) - logvar - 1.0
    kl = (kl_terms * m).sum() * (0.5 / (rows * mu.shape[-1]))
    total = mse + kl * kl_weight
    return total, {"mse": mse.item(), "kl": kl.item(), "total": total.item()}


def build_stages(doc: Document, b: int) -> list[Document]:
    """Prefix documents: stage k holds the first ceil(k*n/B) elements."""
    n = len(doc.elements)
    if n == 0:
        raise EmptyDocument("cannot build rendering stages for an empty document")
    if b < 1:
        raise ValueError("B must be >= 1")
    return [doc.with_(elements=doc.elements[:math.ceil(k * n / b)]) for k in range(1, b + 1)]


def valid_mask(m: np.ndarray) -> np.ndarray:
    """Rows from SOS through EOS inclusive."""
    eos = int(np.argmax(np.rint(m[:, 0]) == EOS))
    mask = np.zeros(m.shape[0])
    mask[: eos + 1] = 1.0
    return mask


@dataclass
class StageBatch:
    """Embedded stages of one document, ready for a training step."""

    emb: np.ndarray  # (B, N, D_e)
    pix: np.ndarray  # (B, N, D_p)
    mask: np.ndarray  # (B, N)
    matrices: np.ndarray  # (B, N, 14)


def prepare_batch(doc: Document, cfg: VAEConfig, tables: EmbedTables, cache=None) -> StageBatch:
    stages = build_stages(doc, cfg.stages)
    mats = np.stack([encode_matrix(s, cfg.n) for s in stages])
    emb = np.stack([embed(normalize_continuous(m, cfg.canvas), tables) for m in mats])
    pix = np.stack([document_features(s, cfg.d_p, cfg.n, cfg.render_size, cache) for s in stages])
    mask = np.stack([valid_mask(m) for m in mats])
    return StageBatch(emb, pix, mask, mats)


def full_document_batch(doc: Document, cfg: VAEConfig, tables: EmbedTables, cache=None) -> StageBatch:
    """Single-stage batch holding only the complete document."""
    m = encode_matrix(doc, cfg.n)
    emb = embed(normalize_continuous(m, cfg.canvas), tables)[None]
    pix = document_features(doc, cfg.d_p, cfg.n, cfg.render_size, cache)[None]
    return StageBatch(emb, pix, valid_mask(m)[None], m[None])


def step_loss(model: VPVAE, tables: EmbedTables, batch: StageBatch, eps: np.ndarray) -> tuple[Tensor, dict]:
    cfg = model.cfg
    code = fuse_encode(batch.emb, batch.pix, model, eps=eps)
    recon = decode(code.z, model)
    target = batch.emb
    if cfg.mse_space == "matrix":
        proj = T.Tensor(tables.proj)
        recon = T.matmul(recon - (tables.pos + tables.bias), proj)
        target = unembed_features(batch.emb, tables)
    return vae_loss(recon, target, code.mu, code.logvar, cfg.kl_weight, batch.mask)


@dataclass
class TrainResult:
    model: VPVAE
    tables: EmbedTables
    trace: list[tuple[int, float, float, float, float]] = field(default_factory=list)


def train_vae(docs: list[Document], cfg: VAEConfig, steps: int, seed: int = 0, cache=None,
              log_every: int = 0, log=print) -> TrainResult:
    """Train on rendering-sequence batches, one random document per step."""
    if not docs:
        raise EmptyDocument("no training documents")
    tables = EmbedTables.init(cfg.n, cfg.d_e, cfg.d_tok, seed=cfg.seed_tables)
    model = VPVAE.init(cfg, seed)
    batches = [prepare_batch(d, cfg, tables, cache) for d in docs]
    params = model.parameters()
    opt = AdamW(params, weight_decay=cfg.weight_decay)
    rng = make_rng(seed, "vae-train")
    trace = []
    for step in range(1, steps + 1):
        batch = batches[int(rng.integers(len(batches)))]
        eps = rng.standard_normal((cfg.stages, cfg.n, cfg.d_z))
        model.zero_grad()
        loss, parts = step_loss(model, tables, batch, eps)
        if not all(math.isfinite(v) for v in parts.values()):
            raise NonFiniteLoss(f"non-finite VAE loss at step {step}: {parts}")
        loss.backward()
        grads, _ = clip_grad_norm([p.grad for p in params], cfg.clip_norm)
        lr = lr_schedule(step, steps, cfg.warmup, cfg.peak_lr, cfg.floor_lr)
        opt.step(grads, lr)
        trace.append((step, lr, parts["mse"], parts["kl"], parts["total"]))
        if log_every and step % log_every == 0:
            log(f"step {step} lr {lr:.3g} mse {parts['mse']:.3e} kl {parts['kl']:.3e}")
    return TrainResult(model, tables, trace)


def encode_mean(model: VPVAE, batch: StageBatch) -> np.ndarray:
    with T.no_grad():
        return fuse_encode(batch.emb, batch.pix, model, eps=0.0).mu.data


def reconstruct(model: VPVAE, tables: EmbedTables, batch: StageBatch) -> np.ndarray:
    """Posterior-mean reconstruction in embedding space, shape (B, N, D_e)."""
    with T.no_grad():
        return decode(encode_mean(model, batch), model).data


@dataclass
class ReconstructionReport:
    mse: float
    token_accuracy: float
    exact_documents: int
    count: int


def evaluate(model: VPVAE, tables: EmbedTables, docs: list[Document], cache=None) -> ReconstructionReport:
    """Masked MSE (posterior mean) and discrete-token recovery on full documents."""
    cfg = model.cfg
    se = rows = 0.0
    correct = total = 0
    exact = 0
    for doc in docs:
        batch = full_document_batch(doc, cfg, tables, cache)
        rec = reconstruct(model, tables, batch)
        m = batch.mask[0][:, None]
        se += float(np.sum((rec[0] - batch.emb[0]) ** 2 * m))
        rows += float(m.sum())
        mat = unembed(rec[0], tables, cfg.canvas)
        valid = int(batch.mask[0].sum())
        acc = token_accuracy(mat, batch.matrices[0])
        correct += round(acc * valid)
        total += valid
        exact += int(acc == 1.0)
    return ReconstructionReport(se / (rows * cfg.d_e), correct / total, exact, len(docs))


def latent_to_document(z: np.ndarray, model: VPVAE, tables: EmbedTables) -> tuple[Document, np.ndarray]:
    """Decode one latent (N, D_z) to a repaired Document and its matrix."""
    with T.no_grad():
        rec = decode(z, model).data[0]
    mat = unembed(rec, tables, model.cfg.canvas)
    return decode_matrix(mat, canvas=model.cfg.canvas, strict=False), mat


def vae_tensors(model: VPVAE, tables: EmbedTables) -> dict[str, np.ndarray]:
    out = {"vae." + k: v for k, v in model.state_dict().items()}
    out.update(tables.named("embed."))
    return out


def save_vae(path: str | Path, model: VPVAE, tables: EmbedTables):
    from vexel.config import to_dict

    save_checkpoint(path, vae_tensors(model, tables), {"kind": "vae", **to_dict(model.cfg)})


def load_vae(path: str | Path) -> tuple[VPVAE, EmbedTables]:
    from vexel.config import vae_config
    from vexel.errors import BadCheckpoint

    config, tensors = load_checkpoint(path)
    if config.pop("kind", None) != "vae":
        raise BadCheckpoint(f"{path} is not a VAE checkpoint")
    cfg = vae_config(config)
    model = VPVAE.init(cfg, 0)
    model.load_state_dict({k[4:]: v for k, v in tensors.items() if k.startswith("vae.")})
    try:
        tables = EmbedTables.from_named(tensors, "embed.")
    except KeyError as exc:
        raise BadCheckpoint(f"missing embedding table {exc}") from exc
    return model, tables

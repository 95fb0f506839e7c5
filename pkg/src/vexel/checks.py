"""Gradient oracles for the layers and the full model losses."""
from __future__ import annotations

from contextlib import contextmanager

import numpy as np

from vexel.config import DiTConfig, VAEConfig
from vexel.nn import tensor as T
from vexel.nn.gradcheck import grad_check
from vexel.nn.layers import MLP, LayerNorm, Linear, Module, MultiHeadAttention
from vexel.nn.rng import make_rng

COORDS_PER_TENSOR = 4


def randomize(module: Module, rng: np.random.Generator, scale: float = 0.2):
    """Perturb every parameter so zero-initialized paths carry gradient."""
    for p in module.parameters():
        p.data = np.array(p.data) + scale * rng.standard_normal(p.shape)


@contextmanager
def mutated_gelu():
    """Swap in a GELU whose backward omits the tanh-derivative term.

    A negative control: the oracle must flag the resulting gradients.
    """
    original = T.gelu

    def broken(a):
        a = T.as_tensor(a)
        x = a.data
        t = np.tanh(T._GELU_K * (x + 0.044715 * x ** 3))
        return T._make(0.5 * x * (1.0 + t), (a,), lambda g: (g * 0.5 * (1.0 + t),))

    T.gelu = broken
    try:
        yield
    finally:
        T.gelu = original


def layer_checks(seed: int = 0) -> dict[str, float]:
    """grad_check error for each layer type on small random inputs."""
    rng = make_rng(seed, "layer-check")
    x = T.Tensor(rng.standard_normal((2, 5, 8)))
    ctx = T.Tensor(rng.standard_normal((2, 3, 6)))
    w = T.Tensor(rng.standard_normal((2, 5, 8)))

    def check(module: Module, forward) -> float:
        randomize(module, rng, 0.1)
        return grad_check(lambda: (forward(module) * w).sum(), module.parameters())

    out = {
        "linear": check(Linear(8, 8, rng), lambda m: m(x)),
        "layer_norm": check(LayerNorm(8, rng), lambda m: m(x)),
        "mlp": check(MLP(8, 16, rng), lambda m: m(x)),
        "self_attention_rope": check(MultiHeadAttention(8, 2, rng, rope=True), lambda m: m(x)),
        "cross_attention": check(MultiHeadAttention(8, 2, rng, kv_dim=6, kv_bias=False), lambda m: m(x, ctx)),
    }
    xp = T.Parameter(rng.standard_normal((2, 5, 8)))
    out["softmax"] = grad_check(lambda: (T.softmax(xp) * w).sum(), [xp])
    out["gelu"] = grad_check(lambda: (T.gelu(xp) * w).sum(), [xp])
    out["silu"] = grad_check(lambda: (T.silu(xp) * w).sum(), [xp])
    return out


def vae_check(cfg: VAEConfig, seed: int = 0, batch: int = 2) -> float:
    """grad_check of the full VAE loss (both terms) through encoder and decoder."""
    from vexel.vae import VPVAE, decode, fuse_encode, vae_loss

    rng = make_rng(seed, "vae-check")
    model = VPVAE.init(cfg, seed)
    randomize(model, rng, 0.05)
    emb = rng.standard_normal((batch, cfg.n, cfg.d_e)) * 0.3
    pix = rng.random((batch, cfg.n, cfg.d_p))
    eps = rng.standard_normal((batch, cfg.n, cfg.d_z))
    mask = (np.arange(cfg.n)[None, :] < np.array([[cfg.n // 2], [cfg.n]])[:batch]).astype(float)

    def loss():
        code = fuse_encode(emb, pix, model, eps=eps)
        # a large KL weight keeps both loss terms visible to the check
        return vae_loss(decode(code.z, model), emb, code.mu, code.logvar, 0.5, mask)[0]

    return grad_check(loss, model.parameters(), max_coords=COORDS_PER_TENSOR, rng=rng)


def dit_check(cfg: DiTConfig, seed: int = 0, batch: int = 3) -> float:
    """grad_check of the noise-prediction loss, with gates made non-zero."""
    from vexel.dit import NoiseSchedule, VSDiT, dit_loss

    rng = make_rng(seed, "dit-check")
    model = VSDiT.init(cfg, seed)
    randomize(model, rng, 0.05)
    schedule = NoiseSchedule.linear(cfg.t_diff, cfg.beta_start, cfg.beta_end)
    latents = rng.standard_normal((batch, cfg.n, cfg.d_z))
    texts = rng.standard_normal((batch, cfg.t_txt, cfg.d_txt))

    def loss():
        return dit_loss(latents, texts, schedule, model, make_rng(seed, "dit-check-draws"), p_drop=0.3)

    return grad_check(loss, model.trainable(), max_coords=COORDS_PER_TENSOR, rng=rng)


def gradcheck_configs() -> tuple[VAEConfig, DiTConfig]:
    """Tiny configs shortened to 16 tokens to keep the oracle fast."""
    from vexel.config import dit_config, vae_config

    vae = vae_config({"preset": "tiny", "n": 16})
    dit = dit_config({"preset": "tiny", "n": 16, "d_z": vae.d_z})
    return vae, dit

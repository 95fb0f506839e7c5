"""Modules built on the autodiff core.

Passing ``rng=None`` to a constructor creates shape-only parameters backed by
a broadcast zero, which lets large presets be instantiated and counted
without allocating their weights.
"""
from __future__ import annotations

import math

import numpy as np

from vexel.errors import BadCheckpoint, ShapeMismatch
from vexel.nn import tensor as T
from vexel.nn.tensor import Parameter, Tensor


def _param(shape, rng: np.random.Generator | None, std: float | None = None, fill: float = 0.0) -> Parameter:
    if rng is None:
        return Parameter(np.broadcast_to(np.float64(fill), shape))
    if std is None:
        return Parameter(np.full(shape, fill, dtype=np.float64))
    return Parameter(std * rng.standard_normal(shape))


class Module:
    def forward(self, *args, **kwargs):
        raise NotImplementedError

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def named_parameters(self, prefix: str = ""):
        for name, value in vars(self).items():
            if isinstance(value, Parameter):
                yield prefix + name, value
            elif isinstance(value, Module):
                yield from value.named_parameters(f"{prefix}{name}.")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{prefix}{name}.{i}.")

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def num_parameters(self) -> int:
        return sum(p.data.size for p in self.parameters())

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data for name, p in self.named_parameters()}

    def load_state_dict(self, tensors: dict[str, np.ndarray]):
        params = dict(self.named_parameters())
        missing = [k for k in params if k not in tensors]
        if missing:
            raise BadCheckpoint(f"missing tensors: {', '.join(missing[:5])}")
        for name, p in params.items():
            value = np.asarray(tensors[name], dtype=np.float64)
            if value.shape != p.shape:
                raise BadCheckpoint(f"tensor {name} has shape {value.shape}, expected {p.shape}")
            p.data = value.copy()

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None


class Linear(Module):
    def __init__(self, d_in: int, d_out: int, rng=None, bias: bool = True, zero: bool = False):
        std = None if zero else 1.0 / math.sqrt(d_in)
        self.weight = _param((d_in, d_out), rng, std)
        if bias:
            self.bias = _param((d_out,), rng)

    def forward(self, x):
        y = T.matmul(x, self.weight)
        return y + self.bias if hasattr(self, "bias") else y


class LayerNorm(Module):
    def __init__(self, d: int, rng=None, affine: bool = True, eps: float = 1e-5):
        self.eps = eps
        self.d = d
        if affine:
            self.weight = _param((d,), rng, fill=1.0)
            self.bias = _param((d,), rng)

    def forward(self, x):
        if not x.shape or x.shape[-1] != self.d:
            raise ShapeMismatch(f"layer norm over {self.d} features got shape {x.shape}")
        return T.layer_norm(x, getattr(self, "weight", None), getattr(self, "bias", None), self.eps)


class MLP(Module):
    """Linear, GELU, Linear."""

    def __init__(self, d: int, hidden: int, rng=None):
        self.fc1 = Linear(d, hidden, rng)
        self.fc2 = Linear(hidden, d, rng)

    def forward(self, x):
        return self.fc2(T.gelu(self.fc1(x)))


class MultiHeadAttention(Module):
    """Scaled dot-product attention over (batch, tokens, features) inputs.

    ``kv_dim`` sets the width of the key/value source for cross-attention.
    ``kv_bias=False`` drops the key/value/output biases so an all-zero
    context produces an exactly zero output.
    """

    def __init__(self, d: int, heads: int, rng=None, kv_dim: int | None = None,
                 rope: bool = False, kv_bias: bool = True):
        if d % heads:
            raise ShapeMismatch(f"width {d} is not divisible by {heads} heads")
        kv_dim = d if kv_dim is None else kv_dim
        self.heads = heads
        self.d = d
        self.use_rope = rope
        self.q = Linear(d, d, rng)
        self.k = Linear(kv_dim, d, rng, bias=kv_bias)
        self.v = Linear(kv_dim, d, rng, bias=kv_bias)
        self.o = Linear(d, d, rng, bias=kv_bias)

    def _split(self, x: Tensor) -> Tensor:
        b, n, _ = x.shape
        return x.reshape(b, n, self.heads, self.d // self.heads).transpose(0, 2, 1, 3)

    def forward(self, x: Tensor, context: Tensor | None = None) -> Tensor:
        if x.ndim != 3 or x.shape[-1] != self.d:
            raise ShapeMismatch(f"attention expects (batch, tokens, {self.d}), got {x.shape}")
        ctx = x if context is None else context
        q, k, v = self._split(self.q(x)), self._split(self.k(ctx)), self._split(self.v(ctx))
        if self.use_rope:
            q, k = T.rope(q), T.rope(k)
        scores = T.matmul(q, k.swapaxes(-1, -2)) * (1.0 / math.sqrt(self.d // self.heads))
        out = T.matmul(T.softmax(scores, axis=-1), v)
        b, _, n, _ = out.shape
        return self.o(out.transpose(0, 2, 1, 3).reshape(b, n, self.d))

    def attention_weights(self, x: Tensor, context: Tensor | None = None) -> np.ndarray:
        ctx = x if context is None else context
        q, k = self._split(self.q(x)), self._split(self.k(ctx))
        if self.use_rope:
            q, k = T.rope(q), T.rope(k)
        scores = T.matmul(q, k.swapaxes(-1, -2)) * (1.0 / math.sqrt(self.d // self.heads))
        return T.softmax(scores, axis=-1).data

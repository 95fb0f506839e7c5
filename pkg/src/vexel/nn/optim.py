"""AdamW, global-norm gradient clipping and the warmup/cosine schedule."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from vexel.errors import ShapeMismatch


def lr_schedule(step: int, total_steps: int, warmup: int = 2000, peak: float = 3e-4,
                floor: float = 1.5e-5) -> float:
    """Linear warmup from 0 to ``peak``, then cosine decay to ``floor``."""
    if step < 0:
        raise ValueError("step must be >= 0")
    if step < warmup:
        return peak * step / warmup
    span = total_steps - warmup
    progress = 1.0 if span <= 0 else min((step - warmup) / span, 1.0)
    return floor + (peak - floor) * (1.0 + math.cos(math.pi * progress)) / 2.0


def global_norm(grads) -> float:
    return math.sqrt(sum(float(np.sum(g * g)) for g in grads if g is not None))


def clip_grad_norm(grads: list[np.ndarray], max_norm: float = 2.0) -> tuple[list[np.ndarray], float]:
    """Rescale so the global L2 norm is at most ``max_norm``; returns the pre-clip norm."""
    norm = global_norm(grads)
    if norm <= max_norm or norm == 0.0:
        return list(grads), norm
    scale = max_norm / norm
    return [g * scale for g in grads], norm


@dataclass
class AdamW:
    """Adam with decoupled weight decay.

    Decay applies to parameters with two or more dimensions (weight
    matrices); biases, norm scales and other vectors are not decayed.
    """

    params: list
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.1
    step_count: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        if not self.m:
            self.m = [np.zeros(p.shape) for p in self.params]
            self.v = [np.zeros(p.shape) for p in self.params]

    def step(self, grads: list[np.ndarray], lr: float):
        if len(grads) != len(self.params):
            raise ShapeMismatch(f"{len(grads)} gradients for {len(self.params)} parameters")
        self.step_count += 1
        t = self.step_count
        c1 = 1.0 - self.beta1 ** t
        c2 = 1.0 - self.beta2 ** t
        for i, (p, g) in enumerate(zip(self.params, grads)):
            if g is None:
                g = np.zeros(p.shape)
            if g.shape != p.shape:
                raise ShapeMismatch(f"gradient shape {g.shape} vs parameter {p.shape}")
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g
            data = p.data
            if self.weight_decay and p.data.ndim >= 2:
                data = data - lr * self.weight_decay * data
            p.data = data - lr * (self.m[i] / c1) / (np.sqrt(self.v[i] / c2) + self.eps)


def adamw_step(params, grads, state: AdamW | None, lr: float) -> AdamW:
    """Functional wrapper: create the state on first use, then step it."""
    state = state if state is not None else AdamW(list(params))
    state.step(list(grads), lr)
    return state

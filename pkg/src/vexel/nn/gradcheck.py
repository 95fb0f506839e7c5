"""Finite-difference verification of reverse-mode gradients."""
from __future__ import annotations

from typing import Callable

import numpy as np

from vexel.nn.tensor import Parameter, Tensor


def grad_check(fn: Callable[[], Tensor], params: list[Parameter], eps: float = 1e-5, floor: float = 1e-6,
               max_coords: int | None = None, rng: np.random.Generator | None = None) -> float:
    """Max relative error between analytic and central-difference gradients.

    The error for each parameter tensor is ``|a - n| / max(|a|, |n|, floor)``
    with ``|.|`` the L2 norm over the checked coordinates; the result is the
    maximum over tensors. The floor absorbs roundoff on gradients that
    vanish identically (a key bias under softmax, for example).
    ``max_coords`` limits how many coordinates of each tensor are probed
    (chosen with ``rng``).
    """
    for p in params:
        p.grad = None
    fn().backward()
    analytic = [np.zeros(p.shape) if p.grad is None else p.grad.copy() for p in params]
    worst = 0.0
    for p, a in zip(params, analytic):
        flat = p.data.reshape(-1)
        if not flat.flags.writeable:
            raise ValueError("grad_check needs materialized parameters")
        idx = np.arange(flat.size)
        if max_coords is not None and flat.size > max_coords:
            idx = np.sort((rng or np.random.default_rng(0)).choice(flat.size, max_coords, replace=False))
        numeric = np.empty(len(idx))
        for j, i in enumerate(idx):
            orig = flat[i]
            flat[i] = orig + eps
            hi = fn().item()
            flat[i] = orig - eps
            lo = fn().item()
            flat[i] = orig
            numeric[j] = (hi - lo) / (2.0 * eps)
        an = a.reshape(-1)[idx]
        err = np.linalg.norm(an - numeric) / max(np.linalg.norm(an), np.linalg.norm(numeric), floor)
        worst = max(worst, float(err))
    return worst

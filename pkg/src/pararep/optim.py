"""Adam with bias correction and a linear-warmup-then-constant schedule."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DimensionError


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    t: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    @classmethod
    def for_params(cls, params, **hyper) -> "AdamState":
        state = cls(**hyper)
        state.m = [np.zeros_like(p.data) for p in params]
        state.v = [np.zeros_like(p.data) for p in params]
        return state


def adam_step(params, grads, state: AdamState, lr: float | None = None) -> None:
    """One in-place Adam update.  ``grads[i]`` may be None (treated as zero)."""
    if len(params) != len(state.m):
        raise DimensionError(f"optimizer holds {len(state.m)} buffers for {len(params)} parameters")
    state.t += 1
    lr = state.lr if lr is None else lr
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if g is None:
            g = np.zeros_like(p.data)
        if g.shape != p.data.shape or m.shape != p.data.shape:
            raise DimensionError(f"gradient shape {g.shape} does not match parameter shape {p.data.shape}")
        if state.weight_decay:
            g = g + state.weight_decay * p.data
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        mhat = m / c1
        vhat = v / c2
        p.data -= (lr * mhat / (np.sqrt(vhat) + state.eps)).astype(p.data.dtype, copy=False)


def clip_grad_norm(params, max_norm: float) -> float:
    total = float(np.sqrt(sum(float((p.grad.astype(np.float64) ** 2).sum()) for p in params if p.grad is not None)))
    if total > max_norm > 0:
        scale = max_norm / (total + 1e-12)
        for p in params:
            if p.grad is not None:
                p.grad *= scale
    return total


def warmup_lr(step: int, base_lr: float, warmup: int) -> float:
    """Linear ramp over ``warmup`` steps, constant afterwards (step is 0-based)."""
    if warmup < 0:
        raise ConfigError("warmup must be non-negative")
    if warmup == 0:
        return base_lr
    return base_lr * min(1.0, (step + 1) / warmup)


class Adam:
    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8, weight_decay=0.0, clip_norm=None):
        self.params = list(params)
        self.state = AdamState.for_params(self.params, lr=lr, beta1=beta1, beta2=beta2, eps=eps,
                                          weight_decay=weight_decay)
        self.clip_norm = clip_norm

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def step(self, lr: float | None = None):
        if self.clip_norm:
            clip_grad_norm(self.params, self.clip_norm)
        adam_step(self.params, [p.grad for p in self.params], self.state, lr)

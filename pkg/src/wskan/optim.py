"""AdamW with decoupled weight decay and a warmup + linear-decay schedule."""

from __future__ import annotations

import numpy as np

from .engine import Tensor

__all__ = ["lr_schedule", "AdamW"]


def lr_schedule(step: int, base_lr: float, warmup_steps: int, total_steps: int,
                kind: str = "warmup-linear") -> float:
    """Learning rate at a 0-based step.

    Ramps linearly from 0 to base_lr over warmup_steps, then either decays
    linearly to 0 at total_steps ("warmup-linear") or stays flat
    ("warmup-constant").
    """
    if kind not in ("warmup-linear", "warmup-constant"):
        raise ValueError(f"unknown schedule kind {kind!r}")
    if step < 0 or total_steps < 1 or warmup_steps < 0:
        raise ValueError("steps must be non-negative and total_steps >= 1")
    if step < warmup_steps:
        return base_lr * step / warmup_steps
    if kind == "warmup-constant":
        return base_lr
    if total_steps <= warmup_steps:
        return base_lr
    frac = (total_steps - step) / (total_steps - warmup_steps)
    return base_lr * max(0.0, frac)


class AdamW:
    """Decoupled-decay Adam over a list of engine parameter tensors.

    The decay multiplies parameters by (1 - lr_t * weight_decay) before the
    moment update, so parameters shrink even on steps whose gradient is
    zero (as long as lr_t > 0).
    """

    def __init__(self, params: list[Tensor], lr: float = 1e-3, betas=(0.9, 0.999),
                 eps: float = 1e-8, weight_decay: float = 0.01,
                 warmup_steps: int = 100, total_steps: int = 1000,
                 schedule: str = "warmup-linear"):
        if lr < 0 or weight_decay < 0:
            raise ValueError("lr and weight_decay must be non-negative")
        self.params = list(params)
        self.lr = float(lr)
        self.beta1, self.beta2 = betas
        self.eps = float(eps)
        self.weight_decay = float(weight_decay)
        self.warmup_steps = int(warmup_steps)
        self.total_steps = int(total_steps)
        self.schedule = schedule
        lr_schedule(0, lr, warmup_steps, total_steps, schedule)  # validate args
        self.step_count = 0
        self.m = [np.zeros_like(p.value) for p in self.params]
        self.v = [np.zeros_like(p.value) for p in self.params]

    def current_lr(self) -> float:
        return lr_schedule(self.step_count, self.lr, self.warmup_steps, self.total_steps, self.schedule)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        lr_t = self.current_lr()
        t = self.step_count + 1
        bc1 = 1.0 - self.beta1 ** t
        bc2 = 1.0 - self.beta2 ** t
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad if p.grad is not None else np.zeros_like(p.value)
            p.value *= 1.0 - lr_t * self.weight_decay
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p.value -= lr_t * (m / bc1) / (np.sqrt(v / bc2) + self.eps)
        self.step_count += 1

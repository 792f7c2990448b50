"""AdamW with decoupled weight decay, and the cosine warmup schedule."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .tensor import NonFiniteError, Parameter


class MissingGradError(RuntimeError):
    pass


@dataclass
class OptimizerState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.98
    eps: float = 1e-8
    weight_decay: float = 0.0
    step_count: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    def hyperparameters(self) -> dict:
        return {
            "lr": self.lr,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "eps": self.eps,
            "weight_decay": self.weight_decay,
        }


def init_state(params: Iterable[Parameter], **hyper) -> OptimizerState:
    """Zero moments for every trainable parameter."""
    state = OptimizerState(**hyper)
    for p in params:
        if p.trainable:
            state.m[p.name] = np.zeros_like(p.data)
            state.v[p.name] = np.zeros_like(p.data)
    return state


def adamw_step(params: Iterable[Parameter], state: OptimizerState, lr: float | None = None) -> OptimizerState:
    """One AdamW update, in place. Grads are cleared afterwards.

    Non-trainable parameters are skipped entirely and keep their bits.
    """
    params = list(params)
    trainable = [p for p in params if p.trainable]
    for p in trainable:
        if p.grad is None:
            raise MissingGradError(f"trainable parameter {p.name!r} has no grad")
        if p.grad.shape != p.data.shape:
            raise ValueError(f"grad shape {p.grad.shape} != param shape {p.data.shape} for {p.name!r}")
        if not np.all(np.isfinite(p.grad)):
            raise NonFiniteError(f"non-finite grad for {p.name!r}")

    lr = state.lr if lr is None else lr
    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1**t
    bc2 = 1.0 - b2**t
    for p in trainable:
        if p.name not in state.m:
            state.m[p.name] = np.zeros_like(p.data)
            state.v[p.name] = np.zeros_like(p.data)
        dt = p.data.dtype.type
        g = p.grad
        m = state.m[p.name]
        v = state.v[p.name]
        m *= dt(b1)
        m += dt(1.0 - b1) * g
        v *= dt(b2)
        v += dt(1.0 - b2) * (g * g)
        if state.weight_decay:
            p.data *= dt(1.0 - lr * state.weight_decay)
        mhat = m / dt(bc1)
        vhat = v / dt(bc2)
        p.data -= dt(lr) * mhat / (np.sqrt(vhat) + dt(state.eps))
    for p in params:
        p.grad = None
    return state


def cosine_warmup_lr(step: int, total_steps: int, warmup_ratio: float, base_lr: float) -> float:
    """Linear ramp from 0 over ceil(ratio * total) steps, then cosine decay to 0."""
    if not 0 < warmup_ratio < 1:
        raise ValueError(f"warmup_ratio must be in (0, 1), got {warmup_ratio}")
    if step < 0 or step > total_steps:
        raise ValueError(f"step {step} outside [0, {total_steps}]")
    warmup = math.ceil(warmup_ratio * total_steps)
    if step < warmup:
        return base_lr * step / warmup
    if step == total_steps:
        return 0.0
    progress = (step - warmup) / (total_steps - warmup)
    return base_lr * 0.5 * (1.0 + math.cos(math.pi * progress))

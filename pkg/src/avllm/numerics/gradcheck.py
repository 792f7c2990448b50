"""Finite-difference gradient checking."""

from __future__ import annotations

from typing import Callable

import numpy as np

from .tensor import ShapeError, Tensor, no_grad


def _scalar(out) -> float:
    if not isinstance(out, Tensor):
        raise TypeError(f"function must return a Tensor, got {type(out).__name__}")
    if out.data.size != 1:
        raise ShapeError(f"grad_check needs a scalar output, got shape {out.shape}")
    return float(out.data.reshape(()))


def numeric_grad(f: Callable[[Tensor], Tensor], x: Tensor, eps: float = 1e-3) -> np.ndarray:
    grad = np.zeros(x.shape, dtype=np.float64)
    flat = x.data.reshape(-1)
    gflat = grad.reshape(-1)
    with no_grad():
        for i in range(flat.size):
            orig = flat[i]
            vals = []
            for off in (2.0, 1.0, -1.0, -2.0):
                flat[i] = orig + off * eps
                vals.append(_scalar(f(x)))
            flat[i] = orig
            f2, f1, fm1, fm2 = vals
            # fourth-order central stencil, differenced pairwise so a flat f gives exactly 0
            gflat[i] = (8.0 * (f1 - fm1) - (f2 - fm2)) / (12.0 * eps)
    return grad


def analytic_grad(f: Callable[[Tensor], Tensor], x: Tensor) -> np.ndarray:
    prev = x.requires_grad
    x.requires_grad = True
    x.grad = None
    try:
        out = f(x)
        _scalar(out)
        if out.requires_grad:
            out.backward()
        g = np.zeros(x.shape) if x.grad is None else np.array(x.grad, dtype=np.float64)
    finally:
        x.grad = None
        x.requires_grad = prev
    return g


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-12) -> np.ndarray:
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / denom


def grad_check(f: Callable[[Tensor], Tensor], x: Tensor, eps: float = 1e-3) -> float:
    """Max relative error between backprop and finite differences for d f / d x.

    ``x`` is perturbed in place and restored. Use float64 data.
    """
    a = analytic_grad(f, x)
    n = numeric_grad(f, x, eps)
    if a.size == 0:
        return 0.0
    return float(relative_error(a, n).max())

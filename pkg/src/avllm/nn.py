"""Transformer pieces shared by the toy vision encoder and the decoder LM."""

from __future__ import annotations

import numpy as np

from . import numerics as F
from .numerics import Tensor
from .params import ParamStore


def init_linear(store: ParamStore, name: str, d_in: int, d_out: int, rng: np.random.Generator, std: float | None = None) -> None:
    std = 1.0 / np.sqrt(d_in) if std is None else std
    store.add(f"{name}.W", (rng.standard_normal((d_in, d_out)) * std).astype(np.float32))
    store.add(f"{name}.b", np.zeros(d_out, dtype=np.float32))


def init_layernorm(store: ParamStore, name: str, dim: int) -> None:
    store.add(f"{name}.g", np.ones(dim, dtype=np.float32))
    store.add(f"{name}.b", np.zeros(dim, dtype=np.float32))


def init_block(store: ParamStore, name: str, dim: int, rng: np.random.Generator, std: float | None, out_std: float | None) -> None:
    init_layernorm(store, f"{name}.ln1", dim)
    for proj in ("q", "k", "v"):
        init_linear(store, f"{name}.attn.{proj}", dim, dim, rng, std)
    init_linear(store, f"{name}.attn.out", dim, dim, rng, out_std)
    init_layernorm(store, f"{name}.ln2", dim)
    init_linear(store, f"{name}.mlp.fc1", dim, 4 * dim, rng, std)
    init_linear(store, f"{name}.mlp.fc2", 4 * dim, dim, rng, out_std)


def dense(x: Tensor, store: ParamStore, name: str) -> Tensor:
    return F.linear(x, store[f"{name}.W"], store[f"{name}.b"])


def norm(x: Tensor, store: ParamStore, name: str) -> Tensor:
    return F.layer_norm(x, store[f"{name}.g"], store[f"{name}.b"])


def self_attention(x: Tensor, store: ParamStore, name: str, n_heads: int, causal: bool) -> Tensor:
    B, S, D = x.shape
    dh = D // n_heads

    def heads(t: Tensor) -> Tensor:
        return t.reshape(B, S, n_heads, dh).transpose(0, 2, 1, 3)

    q = heads(dense(x, store, f"{name}.q"))
    k = heads(dense(x, store, f"{name}.k"))
    v = heads(dense(x, store, f"{name}.v"))
    out = F.attention(q, k, v, causal=causal)
    out = out.transpose(0, 2, 1, 3).reshape(B, S, D)
    return dense(out, store, f"{name}.out")


def block(x: Tensor, store: ParamStore, name: str, n_heads: int, causal: bool) -> Tensor:
    """Pre-norm residual block on (B, S, D)."""
    x = x + self_attention(norm(x, store, f"{name}.ln1"), store, f"{name}.attn", n_heads, causal)
    h = F.gelu(dense(norm(x, store, f"{name}.ln2"), store, f"{name}.mlp.fc1"))
    return x + dense(h, store, f"{name}.mlp.fc2")

"""Toy decoder-only LM that reads a dense multimodal prefix spliced into token ids."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numerics as F
from .config import ModelConfig
from .instruction import render_prompt
from .nn import block, dense, init_block, init_layernorm, norm
from .numerics import ShapeError, Tensor, no_grad
from .params import ParamStore
from .vocab import EOS, PAD, Vocabulary


def init_lm_params(store: ParamStore, cfg: ModelConfig, rng: np.random.Generator) -> None:
    D, V = cfg.d_l, cfg.vocab_size
    store.add("lm.tok_emb", (rng.standard_normal((V, D)) * 0.02).astype(np.float32))
    store.add("lm.pos_emb", (rng.standard_normal((cfg.max_seq, D)) * 0.02).astype(np.float32))
    out_std = 0.02 / np.sqrt(2 * cfg.lm_layers)
    for i in range(cfg.lm_layers):
        init_block(store, f"lm.blocks.{i}", D, rng, std=0.02, out_std=out_std)
    init_layernorm(store, "lm.ln_f", D)
    store.add("lm.head.W", (rng.standard_normal((D, V)) * 0.02).astype(np.float32))
    store.add("lm.head.b", np.zeros(V, dtype=np.float32))


@dataclass
class SequenceInput:
    """Token ids with an optional dense prefix inserted before ``ids[slot]``."""

    ids: np.ndarray
    prefix: Tensor | None = None
    slot: int = 0

    @property
    def prefix_len(self) -> int:
        return 0 if self.prefix is None else self.prefix.shape[0]

    def __len__(self) -> int:
        return len(self.ids) + self.prefix_len

    def text_positions(self) -> np.ndarray:
        """Sequence position of each text token."""
        j = np.arange(len(self.ids))
        return np.where(j < self.slot, j, j + self.prefix_len)


@dataclass
class LogitSequence:
    logits: Tensor  # (S, V)
    text_positions: np.ndarray
    prefix_span: tuple[int, int]


def _embed(seq: SequenceInput, store: ParamStore) -> Tensor:
    emb = store["lm.tok_emb"]
    ids = np.asarray(seq.ids, dtype=np.int64)
    if seq.prefix is None or seq.prefix_len == 0:
        return F.embedding(emb, ids)
    if seq.prefix.shape[-1] != emb.shape[1]:
        raise ShapeError(f"prefix width {seq.prefix.shape[-1]} != LM width {emb.shape[1]}")
    if not 0 <= seq.slot <= len(ids):
        raise ShapeError(f"media slot {seq.slot} outside [0, {len(ids)}]")
    parts = []
    if seq.slot > 0:
        parts.append(F.embedding(emb, ids[: seq.slot]))
    parts.append(seq.prefix)
    if seq.slot < len(ids):
        parts.append(F.embedding(emb, ids[seq.slot:]))
    return F.concat(parts, axis=0)


def hidden_states(batch: list[SequenceInput], store: ParamStore, cfg: ModelConfig) -> Tensor:
    """Right-padded (B, S, D) residual stream after the last block (before ln_f)."""
    lengths = [len(s) for s in batch]
    S = max(lengths)
    if S > cfg.max_seq:
        raise ShapeError(f"sequence length {S} exceeds max_seq={cfg.max_seq}")
    rows = [F.pad_rows(_embed(s, store), S) for s in batch]
    x = F.stack(rows, axis=0) + store["lm.pos_emb"][:S]
    for i in range(cfg.lm_layers):
        x = block(x, store, f"lm.blocks.{i}", cfg.lm_heads, causal=True)
    return x


def head(h: Tensor, store: ParamStore) -> Tensor:
    return dense(norm(h, store, "lm.ln_f"), store, "lm.head")


def lm_forward(prefix, input_ids, store: ParamStore, cfg: ModelConfig, slot: int = 0) -> LogitSequence:
    """Logits at every position of [ids[:slot], prefix, ids[slot:]] under a causal mask.

    ``prefix`` may be a MultimodalPrefix, a (L, D_l) Tensor, or None.
    """
    tokens = getattr(prefix, "tokens", prefix)
    seq = SequenceInput(np.asarray(input_ids, dtype=np.int64), tokens, slot)
    if len(seq.ids) and (seq.ids.min() < 0 or seq.ids.max() >= cfg.vocab_size):
        raise ValueError("input ids out of vocabulary range")
    h = hidden_states([seq], store, cfg)
    logits = head(h, store)[0]
    return LogitSequence(logits, seq.text_positions(), (slot, slot + seq.prefix_len))


def lm_loss(logits: LogitSequence, targets, mask) -> Tensor:
    """Mean next-token cross-entropy over text positions where ``mask`` is set."""
    targets = np.asarray(targets, dtype=np.int64)
    mask = np.asarray(mask, dtype=bool)
    if targets.shape != mask.shape or len(mask) != len(logits.text_positions):
        raise ShapeError("targets/mask must align with the text positions")
    if not mask.any():
        raise ValueError("loss mask selects no supervised tokens")
    rows = logits.text_positions[mask]
    nll = F.cross_entropy(logits.logits[rows], targets[mask])
    return F.mean(nll)


def batch_loss(batch: list[SequenceInput], targets: list[np.ndarray], masks: list[np.ndarray], store: ParamStore, cfg: ModelConfig) -> Tensor:
    """Mean over samples of each sample's mean supervised cross-entropy."""
    h = hidden_states(batch, store, cfg)
    B, S, D = h.shape
    flat_rows, flat_targets, weights = [], [], []
    for b, (seq, tgt, m) in enumerate(zip(batch, targets, masks)):
        m = np.asarray(m, dtype=bool)
        n = int(m.sum())
        if n == 0:
            raise ValueError(f"sample {b} has no supervised tokens")
        flat_rows.append(b * S + seq.text_positions()[m])
        flat_targets.append(np.asarray(tgt, dtype=np.int64)[m])
        weights.append(np.full(n, 1.0 / (n * B)))
    rows = np.concatenate(flat_rows)
    picked = h.reshape(B * S, D)[rows]
    nll = F.cross_entropy(head(picked, store), np.concatenate(flat_targets))
    w = Tensor(np.concatenate(weights).astype(h.dtype))
    return F.tsum(nll * w)


def generate(
    prefix,
    instruction: str,
    store: ParamStore,
    vocab: Vocabulary,
    cfg: ModelConfig,
    max_new: int,
    mode: str = "greedy",
    temperature: float = 1.0,
    seed: int = 0,
    system_prompt: str = "",
) -> str:
    """Decode a response until EOS or ``max_new`` tokens."""
    if max_new <= 0:
        raise ValueError(f"max_new must be positive, got {max_new}")
    if mode not in ("greedy", "sample"):
        raise ValueError(f"unknown decoding mode {mode!r}")
    if mode == "sample" and temperature <= 0:
        raise ValueError("temperature must be positive")
    ids, slot, _ = render_prompt(instruction, vocab, system_prompt)
    tokens = getattr(prefix, "tokens", prefix)
    rng = np.random.default_rng(seed)
    out: list[int] = []
    with no_grad():
        for _ in range(max_new):
            seq = SequenceInput(ids, tokens, slot)
            if len(seq) > cfg.max_seq:
                break
            h = hidden_states([seq], store, cfg)
            logits = head(h[0, len(seq) - 1], store).data.astype(np.float64)
            # ids beyond the vocabulary (the head is sized to vocab_size) and PAD are never emitted
            logits[len(vocab):] = -np.inf
            logits[PAD] = -np.inf
            if mode == "greedy":
                nxt = int(np.argmax(logits))
            else:
                z = logits / temperature
                p = np.exp(z - z.max())
                nxt = int(rng.choice(len(p), p=p / p.sum()))
            if nxt == EOS:
                break
            out.append(nxt)
            ids = np.append(ids, nxt)
    return vocab.decode(out)

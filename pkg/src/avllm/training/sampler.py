"""Modality-balanced batch sampling."""

from __future__ import annotations

from collections import Counter

import numpy as np

from ..instruction import InstructionRecord
from ..modality import Modality
from .stages import largest_remainder


class EmptyPoolError(ValueError):
    pass


def composition(records: list[InstructionRecord]) -> dict[Modality, float]:
    counts = Counter(r.modality for r in records)
    n = sum(counts.values())
    return {m: counts.get(m, 0) / n for m in Modality} if n else {}


def normalize_mix(mix: dict, available: set[Modality]) -> dict[Modality, float]:
    """Parse a ratio map; ratios must sum to 1 and every requested modality must be present."""
    parsed = {Modality.parse(k): float(v) for k, v in mix.items()}
    if any(v < 0 for v in parsed.values()):
        raise ValueError(f"mixing ratios must be non-negative, got {mix}")
    if abs(sum(parsed.values()) - 1.0) > 1e-6:
        raise ValueError(f"mixing ratios must sum to 1, got {sum(parsed.values())}")
    missing = sorted(m.value for m, v in parsed.items() if v > 0 and m not in available)
    if missing:
        raise EmptyPoolError(f"requested modalities absent from dataset: {missing}")
    return {m: v for m, v in parsed.items() if v > 0}


def restrict_mix(mix: dict | None, allowed: tuple[Modality, ...]) -> dict | None:
    """Mix for one schedule phase: drop modalities the phase filters out and renormalise."""
    if mix is None:
        return None
    kept = {Modality.parse(k): float(v) for k, v in mix.items() if Modality.parse(k) in allowed and float(v) > 0}
    if not kept:
        return None
    s = sum(kept.values())
    return {m: v / s for m, v in kept.items()}


def allocate_counts(batch_size: int, mix: dict[Modality, float], rng: np.random.Generator) -> dict[Modality, int]:
    """floor(r*B) per modality; the remainder goes to the largest fractional parts."""
    mods = sorted(mix, key=lambda m: m.value)
    counts = largest_remainder(batch_size, [mix[m] for m in mods], rng)
    return dict(zip(mods, counts))


class ModalitySampler:
    """Draws batches with per-modality counts; each pool is walked without replacement and reshuffled when exhausted."""

    def __init__(self, records: list[InstructionRecord], batch_size: int, rng: np.random.Generator, mix: dict | None = None):
        if not records:
            raise EmptyPoolError("cannot sample from an empty dataset")
        if batch_size <= 0:
            raise ValueError("batch_size must be positive")
        self.records = records
        self.batch_size = batch_size
        self.rng = rng
        self.pools: dict[Modality, list[int]] = {}
        for i, r in enumerate(records):
            self.pools.setdefault(r.modality, []).append(i)
        if mix is not None:
            self.mix = normalize_mix(mix, set(self.pools))
        else:
            self.mix = {m: v for m, v in composition(records).items() if v > 0}
        self.order: dict[Modality, list[int]] = {}
        self.pos: dict[Modality, int] = {}
        for m in sorted(self.pools, key=lambda m: m.value):
            self._reshuffle(m)

    def _reshuffle(self, m: Modality) -> None:
        self.order[m] = [int(i) for i in self.rng.permutation(self.pools[m])]
        self.pos[m] = 0

    def _take(self, m: Modality, k: int) -> list[int]:
        out = []
        for _ in range(k):
            if self.pos[m] >= len(self.order[m]):
                self._reshuffle(m)
            out.append(self.order[m][self.pos[m]])
            self.pos[m] += 1
        return out

    def sample(self) -> list[InstructionRecord]:
        counts = allocate_counts(self.batch_size, self.mix, self.rng)
        idx: list[int] = []
        for m in sorted(counts, key=lambda m: m.value):
            idx.extend(self._take(m, counts[m]))
        return [self.records[i] for i in idx]

    def state(self) -> dict:
        return {
            "order": {m.value: o for m, o in self.order.items()},
            "pos": {m.value: p for m, p in self.pos.items()},
        }

    def load_state(self, state: dict) -> None:
        self.order = {Modality.parse(k): [int(i) for i in v] for k, v in state["order"].items()}
        self.pos = {Modality.parse(k): int(v) for k, v in state["pos"].items()}


def sample_batch(records: list[InstructionRecord], mix: dict | None, batch_size: int, rng: np.random.Generator) -> list[InstructionRecord]:
    """One batch from a fresh sampler (stateless convenience)."""
    return ModalitySampler(records, batch_size, rng, mix).sample()

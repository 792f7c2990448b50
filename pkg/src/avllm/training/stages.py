"""Stage configs, schedule plans and step budgeting."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..config import RunConfig, StageSettings
from ..modality import Modality

STAGE_TRAINABLE: dict[str, tuple[str, ...]] = {
    "pretrain": ("projector.",),
    "sft": ("projector.", "lm."),
}

SCHEDULES = ("mat", "pt1", "pt2")

_PHASES: dict[str, list[tuple[Modality, ...]]] = {
    "mat": [(Modality.VIS, Modality.AUD, Modality.AUD_VIS)],
    "pt1": [(Modality.AUD_VIS,), (Modality.VIS,), (Modality.AUD,)],
    "pt2": [(Modality.VIS,), (Modality.AUD,), (Modality.AUD_VIS,)],
}


@dataclass(frozen=True)
class StageConfig:
    name: str
    lr: float
    batch_size: int
    epochs: int
    warmup_ratio: float = 0.03
    max_steps: int | None = None
    weight_decay: float = 0.0
    eps: float = 1e-8
    betas: tuple[float, float] = (0.9, 0.98)

    def __post_init__(self) -> None:
        if self.name not in STAGE_TRAINABLE:
            raise ValueError(f"unknown stage {self.name!r}; expected one of {sorted(STAGE_TRAINABLE)}")
        if self.batch_size <= 0 or self.epochs <= 0 or self.lr <= 0:
            raise ValueError(f"stage {self.name}: lr, batch_size and epochs must be positive")

    @property
    def trainable_prefixes(self) -> tuple[str, ...]:
        return STAGE_TRAINABLE[self.name]

    def trains(self, name: str) -> bool:
        # encoders never train, whatever the stage
        return not name.startswith("encoder.") and name.startswith(self.trainable_prefixes)

    @classmethod
    def from_settings(cls, name: str, s: StageSettings) -> "StageConfig":
        return cls(name, s.lr, s.batch_size, s.epochs, s.warmup_ratio, s.max_steps, s.weight_decay, s.eps, (s.beta1, s.beta2))

    def total_steps(self, n_samples: int) -> int:
        if self.max_steps is not None:
            return int(self.max_steps)
        return self.epochs * math.ceil(n_samples / self.batch_size)


def stages_from_config(cfg: RunConfig) -> list[StageConfig]:
    return [StageConfig.from_settings("pretrain", cfg.pretrain), StageConfig.from_settings("sft", cfg.sft)]


@dataclass(frozen=True)
class Phase:
    modalities: tuple[Modality, ...]

    @property
    def label(self) -> str:
        return "+".join(m.value for m in self.modalities)

    def admits(self, modality: Modality) -> bool:
        return modality in self.modalities


@dataclass(frozen=True)
class SchedulePlan:
    kind: str
    phases: tuple[Phase, ...] = field(default=())

    @classmethod
    def named(cls, kind: str) -> "SchedulePlan":
        if kind not in _PHASES:
            raise ValueError(f"unknown schedule {kind!r}; expected one of {list(SCHEDULES)}")
        return cls(kind, tuple(Phase(p) for p in _PHASES[kind]))


def largest_remainder(total: int, weights: list[float], rng: np.random.Generator | None = None) -> list[int]:
    """Integer split of ``total`` proportional to ``weights``; ties broken by ``rng`` (else by index)."""
    w = np.asarray(weights, dtype=np.float64)
    if total < 0 or w.size == 0 or (w < 0).any() or w.sum() <= 0:
        raise ValueError(f"cannot split {total} over weights {weights}")
    exact = total * w / w.sum()
    base = np.floor(exact + 1e-9).astype(np.int64)
    frac = np.maximum(exact - base, 0.0)
    rem = total - int(base.sum())
    tiebreak = rng.permutation(w.size) if rng is not None else np.arange(w.size)
    order = sorted(range(w.size), key=lambda i: (-round(frac[i], 12), tiebreak[i]))
    for i in order[:rem]:
        base[i] += 1
    return [int(b) for b in base]


def phase_budgets(total: int, phase_sizes: list[int]) -> list[int]:
    """Steps per phase, proportional to each phase's share of the data."""
    if any(n <= 0 for n in phase_sizes):
        raise ValueError(f"every phase needs samples, got sizes {phase_sizes}")
    return largest_remainder(total, [float(n) for n in phase_sizes])

"""Toy end-to-end experiments shared by scripts/ and the acceptance tests."""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

from .config import MediaConfig, RunConfig, StageSettings
from .curation.toy import toy_corpus
from .evaluation.report import evaluate
from .model import AVLLM
from .modality import Modality
from .training.stages import StageConfig
from .training.trainer import run_schedule
from .vocab import build_vocab


@dataclass(frozen=True)
class ToyExperiment:
    """Sizes for a synthetic QA run; the LM and encoders keep their default widths."""

    frames: int = 8
    segments: int = 4
    batch_size: int = 16
    pretrain_steps: int = 50
    sft_steps: int = 500
    pretrain_lr: float = 2e-3
    sft_lr: float = 1e-3
    caption_per_modality: int = 60
    train_per_modality: int = 200
    test_per_modality: int = 70
    system_prompt: str = ""
    eval_modalities: tuple[str, ...] = ("VIS", "AUD", "AUD_VIS")

    def run_config(self, seed: int) -> RunConfig:
        media = MediaConfig(frames=self.frames, segments=self.segments)
        cfg = RunConfig(
            media=media,
            pretrain=StageSettings(lr=self.pretrain_lr, batch_size=self.batch_size, epochs=1, max_steps=self.pretrain_steps),
            sft=StageSettings(lr=self.sft_lr, batch_size=self.batch_size, epochs=1, max_steps=self.sft_steps),
            seed=seed,
        )
        cfg.data.system_prompt = self.system_prompt
        return cfg

    def stages(self) -> list[StageConfig]:
        return [
            StageConfig("pretrain", self.pretrain_lr, self.batch_size, 1, max_steps=self.pretrain_steps),
            StageConfig("sft", self.sft_lr, self.batch_size, 1, max_steps=self.sft_steps),
        ]


@dataclass
class ToyCorpora:
    pretrain: list
    train: list
    test: list

    @classmethod
    def make(cls, exp: ToyExperiment, seed: int) -> "ToyCorpora":
        base = 1000 * seed
        return cls(
            toy_corpus(exp.caption_per_modality, "caption", base + 1, "pre"),
            toy_corpus(exp.train_per_modality, "conversation", base + 2, "train"),
            toy_corpus(exp.test_per_modality, "conversation", base + 3, "test"),
        )


@dataclass
class ToyResult:
    schedule: str
    seed: int
    accuracy: dict[str, float]
    final_loss: float
    phases: list[dict] = field(default_factory=list)
    seconds: float = 0.0
    prefix_length: int = 0


def run_toy(exp: ToyExperiment, schedule: str = "mat", seed: int = 0, corpora: ToyCorpora | None = None) -> ToyResult:
    """Two-stage training on the toy corpus, then per-modality exact-match accuracy."""
    t0 = time.perf_counter()
    cfg = exp.run_config(seed)
    data = corpora or ToyCorpora.make(exp, seed)
    texts = [t.text for r in data.pretrain + data.train + data.test for t in r.turns] + [cfg.data.system_prompt]
    model = AVLLM(cfg, build_vocab(texts, cfg.model.vocab_size), seed)
    res = run_schedule(model, data.pretrain, data.train, schedule, exp.stages(), seed)
    wanted = {Modality.parse(m) for m in exp.eval_modalities}
    test = [r for r in data.test if r.modality in wanted]
    metrics = evaluate(model, test, ["qa_top1"], max_new=8, encoder_cache={})["metrics"]
    media = cfg.media
    return ToyResult(
        schedule,
        seed,
        metrics["qa_top1_by_modality"],
        res.logs[-1]["loss"],
        res.phases,
        time.perf_counter() - t0,
        media.frames + media.num_patches + media.segments,
    )


def sweep_lengths(exp: ToyExperiment, frames=(4, 8, 16, 32), segments=(1, 2, 4), seed: int = 0) -> list[ToyResult]:
    """One short run per (T, K) grid point."""
    return [run_toy(replace(exp, frames=t, segments=k), "mat", seed) for t in frames for k in segments]

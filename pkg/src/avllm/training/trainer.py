"""Stage trainer and schedule runner."""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from ..instruction import InstructionRecord
from ..modality import Modality
from ..numerics import adamw_step, cosine_warmup_lr, init_state
from .checkpoint import Checkpoint, CheckpointFormatError, UnknownTensorError, check_config
from .routing import RenderCache, forward_batch, masked_backward
from .sampler import ModalitySampler, restrict_mix
from .stages import SchedulePlan, StageConfig, phase_budgets

STAGE_INDEX = {"pretrain": 0, "sft": 1}


class EmptyDatasetError(ValueError):
    pass


class MetricsLog:
    """Append-only JSONL sink; also keeps records in memory."""

    def __init__(self, path: str | Path | None = None):
        self.path = Path(path) if path is not None else None
        self.records: list[dict] = []
        if self.path is not None:
            self.path.parent.mkdir(parents=True, exist_ok=True)

    def __call__(self, rec: dict) -> None:
        self.records.append(rec)
        if self.path is not None:
            with self.path.open("a") as f:
                f.write(json.dumps(rec, sort_keys=True) + "\n")


class StageTrainer:
    """Runs one freeze stage through the phases of a schedule plan.

    The step budget (``epochs * ceil(n / B)`` or ``max_steps``) is split across
    phases in proportion to their data, so every schedule sees the same number
    of updates. One cosine schedule spans the whole stage and the optimizer
    state carries across phase boundaries.
    """

    def __init__(
        self,
        model,
        records: list[InstructionRecord],
        stage: StageConfig,
        plan: SchedulePlan,
        seed: int = 0,
        mix: dict | None = None,
        log: Callable[[dict], None] | None = None,
        encoder_cache: dict | None = None,
    ):
        self.model = model
        self.stage = stage
        self.plan = plan
        self.seed = seed
        self.mix = mix
        self.log = log or (lambda rec: None)
        self.encoder_cache = encoder_cache
        self.render_cache = RenderCache()
        if not records:
            raise EmptyDatasetError(f"stage {stage.name}: dataset is empty")
        self.phase_data = [[r for r in records if ph.admits(r.modality)] for ph in plan.phases]
        for ph, data in zip(plan.phases, self.phase_data):
            if not data:
                raise EmptyDatasetError(f"stage {stage.name}, phase {ph.label}: no samples pass the modality filter")
        self.total = stage.total_steps(len(records))
        if self.total <= 0:
            raise ValueError(f"stage {stage.name} has no steps")
        self.budgets = phase_budgets(self.total, [len(d) for d in self.phase_data])
        model.store.set_trainable(stage.trainable_prefixes)
        for p in model.store.with_prefix("encoder."):
            p.set_trainable(False)
        b1, b2 = stage.betas
        self.opt = init_state(model.store, lr=stage.lr, beta1=b1, beta2=b2, eps=stage.eps, weight_decay=stage.weight_decay)
        self.rng = np.random.default_rng([seed, STAGE_INDEX[stage.name]])
        self.step = 0
        self.phase_index = 0
        self.phase_step = 0
        self.sampler: ModalitySampler | None = None

    @property
    def done(self) -> bool:
        return self.step >= self.total

    @property
    def phase(self):
        return self.plan.phases[self.phase_index]

    def _new_sampler(self) -> ModalitySampler:
        return ModalitySampler(
            self.phase_data[self.phase_index],
            self.stage.batch_size,
            self.rng,
            restrict_mix(self.mix, self.phase.modalities),
        )

    def _enter_phase(self) -> None:
        while self.phase_step >= self.budgets[self.phase_index]:
            self.phase_index += 1
            self.phase_step = 0
            self.sampler = None
        if self.sampler is None:
            self.sampler = self._new_sampler()

    def train_step(self) -> dict:
        if self.done:
            raise RuntimeError(f"stage {self.stage.name} already finished {self.total} steps")
        self._enter_phase()
        batch = self.sampler.sample()
        lr = cosine_warmup_lr(self.step, self.total, self.stage.warmup_ratio, self.stage.lr)
        loss, acts, _ = forward_batch(batch, self.model, self.encoder_cache, self.render_cache)
        masked_backward(loss, acts, self.stage, self.model.store)
        # a parameter with no grad (inactive branch) is left untouched, moments included
        stepped = [p for p in self.model.store if p.trainable and p.grad is not None]
        adamw_step(stepped, self.opt, lr)
        self.model.store.zero_grad()
        counts = Counter(r.modality.value for r in batch)
        rec = {
            "stage": self.stage.name,
            "schedule": self.plan.kind,
            "phase": self.phase.label,
            "phase_index": self.phase_index,
            "step": self.step,
            "lr": lr,
            "loss": float(loss.data),
            "counts": {m.value: counts.get(m.value, 0) for m in Modality},
        }
        self.step += 1
        self.phase_step += 1
        self.log(rec)
        return rec

    def run(self, steps: int | None = None) -> list[dict]:
        out = []
        target = self.total if steps is None else min(self.total, self.step + steps)
        while self.step < target:
            out.append(self.train_step())
        return out

    # -- checkpointing -------------------------------------------------------

    def checkpoint(self) -> Checkpoint:
        tensors = dict(self.model.store.state_dict())
        for name in self.opt.m:
            tensors[f"optim.m.{name}"] = self.opt.m[name].copy()
            tensors[f"optim.v.{name}"] = self.opt.v[name].copy()
        state = {
            "stage": self.stage.name,
            "schedule": self.plan.kind,
            "seed": self.seed,
            "total": self.total,
            "phase_index": self.phase_index,
            "phase_step": self.phase_step,
            "optimizer": {"step_count": self.opt.step_count, **self.opt.hyperparameters()},
            "rng": self.rng.bit_generator.state,
            "sampler": None if self.sampler is None else self.sampler.state(),
            "vocab": self.model.vocab.to_json(),
        }
        return Checkpoint(self.model.cfg.digest(), self.step, state, tensors)

    def restore(self, ckpt: Checkpoint) -> None:
        check_config(ckpt, self.model.cfg.digest())
        st = ckpt.state
        if st.get("stage") != self.stage.name or st.get("schedule") != self.plan.kind:
            raise CheckpointFormatError(
                f"checkpoint is for stage {st.get('stage')}/{st.get('schedule')}, trainer runs {self.stage.name}/{self.plan.kind}"
            )
        names = set(self.model.store.names())
        params, m, v = {}, {}, {}
        for key, arr in ckpt.tensors.items():
            if key.startswith("optim.m.") and key[8:] in names:
                m[key[8:]] = arr
            elif key.startswith("optim.v.") and key[8:] in names:
                v[key[8:]] = arr
            elif key in names:
                params[key] = arr
            else:
                raise UnknownTensorError(f"checkpoint tensor {key!r} matches no parameter of this model")
        missing = sorted(names - set(params))
        if missing:
            raise CheckpointFormatError(f"checkpoint lacks parameters: {missing[:5]}{'...' if len(missing) > 5 else ''}")
        self.model.store.load_state_dict(params)
        self.opt.m = {k: a.copy() for k, a in m.items()}
        self.opt.v = {k: a.copy() for k, a in v.items()}
        self.opt.step_count = int(st["optimizer"]["step_count"])
        self.step = ckpt.step
        self.phase_index = int(st["phase_index"])
        self.phase_step = int(st["phase_step"])
        if st["sampler"] is not None:
            self.sampler = self._new_sampler()
            self.sampler.load_state(st["sampler"])
        else:
            self.sampler = None
        self.rng.bit_generator.state = st["rng"]


def load_params(model, ckpt: Checkpoint) -> None:
    """Copy model parameters (not optimizer state) out of a checkpoint."""
    check_config(ckpt, model.cfg.digest())
    names = set(model.store.names())
    params = {k: a for k, a in ckpt.tensors.items() if not k.startswith("optim.")}
    unknown = sorted(set(params) - names)
    if unknown:
        raise UnknownTensorError(f"checkpoint tensors match no parameter: {unknown[:5]}")
    missing = sorted(names - set(params))
    if missing:
        raise CheckpointFormatError(f"checkpoint lacks parameters: {missing[:5]}")
    model.store.load_state_dict(params)


def train_stage(model, records, stage: StageConfig, plan: SchedulePlan, seed: int = 0, mix=None, log=None, encoder_cache=None) -> tuple[list[dict], Checkpoint]:
    trainer = StageTrainer(model, records, stage, plan, seed, mix, log, encoder_cache)
    logs = trainer.run()
    return logs, trainer.checkpoint()


@dataclass
class ScheduleResult:
    logs: list[dict]
    phases: list[dict] = field(default_factory=list)
    checkpoint: Checkpoint | None = None


def _phase_summary(logs: list[dict]) -> list[dict]:
    out: list[dict] = []
    for rec in logs:
        if not out or (out[-1]["stage"], out[-1]["phase"]) != (rec["stage"], rec["phase"]):
            out.append({"stage": rec["stage"], "phase": rec["phase"], "steps": 0, "loss_sum": 0.0})
        out[-1]["steps"] += 1
        out[-1]["loss_sum"] += rec["loss"]
    for o in out:
        o["mean_loss"] = o.pop("loss_sum") / o["steps"]
    return out


def run_schedule(
    model,
    pretrain_data: list[InstructionRecord],
    sft_data: list[InstructionRecord],
    kind: str,
    stages: list[StageConfig],
    seed: int = 0,
    mix: dict | None = None,
    log=None,
    cache_encoders: bool = True,
) -> ScheduleResult:
    """Pretrain then SFT, each stage walking the phases of ``kind`` in order."""
    plan = SchedulePlan.named(kind)
    for data, what in ((pretrain_data, "pretrain"), (sft_data, "sft")):
        present = {r.modality for r in data}
        if present != set(Modality):
            raise EmptyDatasetError(f"{what} data must contain all three modalities, has {sorted(m.value for m in present)}")
    cache: dict | None = {} if cache_encoders else None
    logs: list[dict] = []
    sink = MetricsLog() if log is None else log
    ckpt = None
    for stage in stages:
        data = pretrain_data if stage.name == "pretrain" else sft_data
        trainer = StageTrainer(model, data, stage, plan, seed, mix, sink, cache)
        logs.extend(trainer.run())
        ckpt = trainer.checkpoint()
    model.store.set_trainable(())
    return ScheduleResult(logs, _phase_summary(logs), ckpt)

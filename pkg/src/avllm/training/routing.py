"""Modality-token routing: which branches run forward and which receive gradients."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .. import numerics as F
from ..encoding import AudioSegments, ModalityMismatchError, MultimodalPrefix, ReducedTokens, VideoFrames, assemble_prefix
from ..instruction import InstructionRecord, RenderedSequence, render_conversation
from ..lm import SequenceInput, batch_loss
from ..modality import Modality
from ..numerics import Tensor, no_grad
from .stages import StageConfig

VISUAL_BRANCH = ("encoder.visual.", "projector.visual_temporal.", "projector.visual_spatial.")
AUDIO_BRANCH = ("encoder.audio.", "projector.audio.")


@dataclass(frozen=True)
class BranchActivation:
    visual_active: bool
    audio_active: bool

    def __post_init__(self) -> None:
        if not (self.visual_active or self.audio_active):
            raise ValueError("at least one branch must be active")

    @classmethod
    def from_modality(cls, modality: Modality | str) -> "BranchActivation":
        m = Modality.parse(modality)
        return cls(m.visual, m.audio)

    def union(self, other: "BranchActivation") -> "BranchActivation":
        return BranchActivation(self.visual_active or other.visual_active, self.audio_active or other.audio_active)

    def branch_prefixes(self) -> tuple[str, ...]:
        return (VISUAL_BRANCH if self.visual_active else ()) + (AUDIO_BRANCH if self.audio_active else ())


def combined_activation(acts: Iterable[BranchActivation]) -> BranchActivation:
    acts = list(acts)
    out = acts[0]
    for a in acts[1:]:
        out = out.union(a)
    return out


def may_receive_grad(name: str, activation: BranchActivation, stage: StageConfig) -> bool:
    """Active-branch or LM parameter that the stage trains."""
    if not stage.trains(name):
        return False
    return name.startswith("lm.") or name.startswith(activation.branch_prefixes())


def check_media(modality: Modality, frames: VideoFrames | None, audio: AudioSegments | None) -> None:
    if modality.visual != (frames is not None) or modality.audio != (audio is not None):
        raise ModalityMismatchError(
            f"{modality.value} sample needs frames={modality.visual}, audio={modality.audio}; "
            f"got frames={frames is not None}, audio={audio is not None}"
        )


def build_prefix(model, record: InstructionRecord, frames, audio, encoder_cache: dict | None = None) -> tuple[MultimodalPrefix, BranchActivation]:
    """Run only the branches the record's modality token activates, then project."""
    modality = record.modality
    check_media(modality, frames, audio)
    activation = BranchActivation.from_modality(modality)
    key = None
    if encoder_cache is not None:
        if any(p.trainable for p in model.store.with_prefix("encoder.")):
            raise RuntimeError("encoder outputs can only be cached while the encoders are frozen")
        key = (json.dumps(record.media.to_dict(), sort_keys=True), modality.value)
    reduced = encoder_cache.get(key) if key is not None else None
    if reduced is None:
        frozen = not any(p.trainable for p in model.store.with_prefix("encoder."))
        if frozen:
            with no_grad():
                reduced = model.encoder.reduce(frames if activation.visual_active else None, audio if activation.audio_active else None)
        else:
            reduced = model.encoder.reduce(frames if activation.visual_active else None, audio if activation.audio_active else None)
        if key is not None:
            encoder_cache[key] = reduced
    # audio tokens are None for a visual-only sample (and vice versa)
    reduced = ReducedTokens(
        reduced.temporal if activation.visual_active else None,
        reduced.spatial if activation.visual_active else None,
        reduced.audio if activation.audio_active else None,
    )
    prefix = assemble_prefix(reduced, model.store, modality)
    F.check_finite(prefix.tokens, "multimodal prefix")
    return prefix, activation


class RenderCache(dict):
    def get_rendered(self, record: InstructionRecord, model) -> RenderedSequence:
        r = self.get(record.id)
        if r is None:
            r = render_conversation(record, model.vocab, model.system_prompt)
            self[record.id] = r
        return r


def forward_batch(
    records: list[InstructionRecord],
    model,
    encoder_cache: dict | None = None,
    render_cache: RenderCache | None = None,
) -> tuple[Tensor, list[BranchActivation], list[MultimodalPrefix]]:
    """Mean per-sample LM loss over a mixed-modality batch."""
    seqs, targets, masks, acts, prefixes = [], [], [], [], []
    for rec in records:
        frames, audio = model.media_for(rec)
        prefix, act = build_prefix(model, rec, frames, audio, encoder_cache)
        rendered = render_cache.get_rendered(rec, model) if render_cache is not None else render_conversation(rec, model.vocab, model.system_prompt)
        seqs.append(SequenceInput(rendered.input_ids, prefix.tokens, rendered.media_slot))
        targets.append(rendered.target_ids)
        masks.append(rendered.loss_mask)
        acts.append(act)
        prefixes.append(prefix)
    loss = batch_loss(seqs, targets, masks, model.store, model.cfg.model)
    F.check_finite(loss, "training loss")
    return loss, acts, prefixes


def forward_with_routing(record: InstructionRecord, model, frames=None, audio=None) -> tuple[Tensor, BranchActivation]:
    """Loss for one record; only the branches its modality needs are executed."""
    if frames is None and audio is None:
        frames, audio = model.media_for(record)
    prefix, act = build_prefix(model, record, frames, audio)
    rendered = render_conversation(record, model.vocab, model.system_prompt)
    seq = SequenceInput(rendered.input_ids, prefix.tokens, rendered.media_slot)
    loss = batch_loss([seq], [rendered.target_ids], [rendered.loss_mask], model.store, model.cfg.model)
    return loss, act


def masked_backward(loss: Tensor, activation: BranchActivation | list[BranchActivation], stage: StageConfig, store) -> dict[str, np.ndarray]:
    """Backprop, then keep grads only where branch activation and stage freeze rules allow."""
    if isinstance(activation, list):
        activation = combined_activation(activation)
    store.zero_grad()
    if loss.requires_grad:
        loss.backward()
    grads = {}
    for p in store:
        if p.grad is None:
            continue
        if may_receive_grad(p.name, activation, stage):
            grads[p.name] = p.grad
        else:
            p.grad = None
    return grads

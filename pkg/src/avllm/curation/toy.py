"""Synthetic QA and caption corpora with closed-form ground truth."""

from __future__ import annotations

import numpy as np

from ..instruction import InstructionRecord, MediaRef, Turn
from ..modality import Modality
from .synthetic import AUDIO_CLASSES, VISUAL_CLASSES, SyntheticSpec, visual_words

QUESTIONS = {
    Modality.VIS: "What object is shown?",
    Modality.AUD: "What sound is heard?",
    Modality.AUD_VIS: "What is shown and heard?",
}

CAPTION_PROMPTS = {
    Modality.VIS: "Describe the video.",
    Modality.AUD: "Describe the audio.",
    Modality.AUD_VIS: "Describe the video and its sound.",
}


def qa_answer(modality: Modality, visual: str | None, audio: str | None) -> str:
    if modality is Modality.VIS:
        return visual_words(visual)
    if modality is Modality.AUD:
        return audio
    return f"{visual_words(visual)} and {audio}"


def caption_answer(modality: Modality, visual: str | None, audio: str | None) -> str:
    if modality is Modality.VIS:
        return f"a {visual_words(visual)} moves across the frame."
    if modality is Modality.AUD:
        return f"a {audio} sound plays."
    return f"a {visual_words(visual)} moves while a {audio} sound plays."


def _spec(modality: Modality, rng: np.random.Generator, seed: int) -> SyntheticSpec:
    vis = sorted(VISUAL_CLASSES)[int(rng.integers(len(VISUAL_CLASSES)))] if modality.visual else None
    aud = AUDIO_CLASSES[int(rng.integers(len(AUDIO_CLASSES)))] if modality.audio else None
    return SyntheticSpec(vis, aud, seed)


def toy_record(rid: str, task: str, spec: SyntheticSpec, modality: Modality) -> InstructionRecord:
    if task == "caption":
        q, a = CAPTION_PROMPTS[modality], caption_answer(modality, spec.visual_class, spec.audio_class)
    else:
        q, a = QUESTIONS[modality], qa_answer(modality, spec.visual_class, spec.audio_class)
    return InstructionRecord(
        id=rid,
        task=task,
        modality=modality,
        media=MediaRef(synthetic_spec=spec.to_dict()),
        turns=[Turn("human", f"{modality.token}\n{q}"), Turn("assistant", a)],
    )


def toy_corpus(per_modality: int, task: str = "conversation", seed: int = 0, prefix: str = "toy") -> list[InstructionRecord]:
    """``per_modality`` records for each of VIS, AUD, AUD_VIS; media seeds are unique per record."""
    if per_modality <= 0:
        raise ValueError("per_modality must be positive")
    rng = np.random.default_rng([seed, 7])
    out = []
    for mi, m in enumerate(Modality):
        for i in range(per_modality):
            media_seed = int(rng.integers(2**31))
            out.append(toy_record(f"{prefix}-{task}-{m.value}-{i:05d}", task, _spec(m, rng, media_seed), m))
    return out

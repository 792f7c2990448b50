"""Four-section prompt templates for instruction generation.

The default texts are original wording written for this package.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..instruction import TASKS
from ..modality import Modality
from .context import MediaContext

VC, AC = "<VC>", "<AC>"
SECTIONS = ("ROLE", "REQUIREMENT", "EXAMPLE", "CONTEXT")
NONE_TEXT = "(none)"


class TemplateError(ValueError):
    pass


@dataclass(frozen=True)
class PromptTemplate:
    task: str
    modality: Modality
    role: str
    requirement: str
    example: str
    context: str = f"Frame captions:\n{VC}\nAudio captions:\n{AC}"

    def __post_init__(self) -> None:
        if self.task not in TASKS:
            raise TemplateError(f"unknown task {self.task!r}")
        for name in ("role", "requirement", "example", "context"):
            if not getattr(self, name).strip():
                raise TemplateError(f"template section {name} is empty")
        for marker in (VC, AC):
            if self.context.count(marker) != 1:
                raise TemplateError(f"context must contain {marker} exactly once")
        for name in ("role", "requirement", "example"):
            if VC in getattr(self, name) or AC in getattr(self, name):
                raise TemplateError(f"placeholder markers belong in the context section, found in {name}")


_ROLE = "You are an assistant that watches and listens to short videos and writes training data about them."

_SOURCE = {
    Modality.VIS: "Use only what the frame captions say; there is no audio.",
    Modality.AUD: "Use only what the audio captions say; there are no frames.",
    Modality.AUD_VIS: "Combine the frame captions and the audio captions.",
}

_REQUIREMENT = {
    "conversation": (
        "Write a multi-turn conversation between a curious user and you about the clip. "
        "Tag every user line with HUMAN: and every reply with ASSISTANT:. "
        "Start with a short question whose answer names what the clip contains. "
        "Keep answers short and grounded."
    ),
    "reasoning": (
        "Write one question that needs reasoning about the clip, then a step-by-step answer. "
        "Tag the question with HUMAN: and the answer with ASSISTANT:."
    ),
    "caption": (
        "Write one detailed description of the clip as a single paragraph. "
        "Do not add role tags."
    ),
}

_EXAMPLE = {
    "conversation": "HUMAN: What animal appears?\nASSISTANT: a brown dog.\nHUMAN: What is it doing?\nASSISTANT: running along a beach.",
    "reasoning": "HUMAN: Why is the crowd cheering?\nASSISTANT: a goal was just scored, so the crowd reacts.",
    "caption": "a brown dog runs along a beach while waves crash in the background.",
}


def default_templates() -> dict[tuple[str, Modality], PromptTemplate]:
    out = {}
    for task in TASKS:
        for m in Modality:
            out[(task, m)] = PromptTemplate(task, m, _ROLE, f"{_REQUIREMENT[task]} {_SOURCE[m]}", _EXAMPLE[task])
    return out


def _lines(prefix: str, captions) -> str:
    return "\n".join(f"{prefix} {i + 1}: {c}" for i, c in enumerate(captions))


def assemble_prompt(template: PromptTemplate, ctx: MediaContext) -> str:
    m = template.modality
    if m.visual and not ctx.has_visual:
        raise TemplateError(f"{m.value} template needs frame captions")
    if m.audio and not ctx.has_audio:
        raise TemplateError(f"{m.value} template needs audio captions")
    vc = _lines("frame", ctx.visual) if (m.visual and ctx.has_visual) else NONE_TEXT
    ac = _lines("segment", ctx.audio) if (m.audio and ctx.has_audio) else NONE_TEXT
    context = template.context.replace(VC, vc).replace(AC, ac)
    body = (template.role, template.requirement, template.example, context)
    return "\n\n".join(f"{name}:\n{text}" for name, text in zip(SECTIONS, body))

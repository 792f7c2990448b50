"""Instruction records: validation, modality-token parsing, rendering to ids + loss mask."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .modality import MODALITY_TOKENS, Modality
from .vocab import ASSISTANT, BOS, EOS, HUMAN, PAD, Vocabulary, tokenize

TASKS = ("caption", "conversation", "reasoning")
ROLES = ("human", "assistant")

_MOD_RE = re.compile(r"<AUD_VIS>|<AUD>|<VIS>")


class StructureError(ValueError):
    pass


class RecordValidationError(ValueError):
    def __init__(self, violations: list[str]):
        self.violations = violations
        super().__init__("; ".join(violations))


@dataclass
class Turn:
    role: str
    text: str


@dataclass
class MediaRef:
    frames: str | None = None
    audio: str | None = None
    synthetic_spec: dict | None = None

    @property
    def has_frames(self) -> bool:
        spec = self.synthetic_spec or {}
        return self.frames is not None or spec.get("visual_class") is not None

    @property
    def has_audio(self) -> bool:
        spec = self.synthetic_spec or {}
        return self.audio is not None or spec.get("audio_class") is not None

    def to_dict(self) -> dict:
        return {"frames": self.frames, "audio": self.audio, "synthetic_spec": self.synthetic_spec}


@dataclass
class InstructionRecord:
    id: str
    task: str
    modality: Modality
    media: MediaRef
    turns: list[Turn] = field(default_factory=list)

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "task": self.task,
            "modality": self.modality.value,
            "media": self.media.to_dict(),
            "turns": [{"role": t.role, "text": t.text} for t in self.turns],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "InstructionRecord":
        media = d["media"]
        return cls(
            id=d["id"],
            task=d["task"],
            modality=Modality.parse(d["modality"]),
            media=MediaRef(media.get("frames"), media.get("audio"), media.get("synthetic_spec")),
            turns=[Turn(t["role"], t["text"]) for t in d["turns"]],
        )

    @property
    def question(self) -> str:
        """First human turn with the modality token removed."""
        return strip_modality_token(self.turns[0].text)

    @property
    def answer(self) -> str:
        return self.turns[1].text


def parse_modality_token(text: str) -> tuple[Modality, int]:
    found = [(m.group(0), m.start()) for m in _MOD_RE.finditer(text)]
    if len(found) != 1:
        detail = ", ".join(f"{tok}@{pos}" for tok, pos in found) or "none"
        raise StructureError(f"expected exactly one modality token, found {len(found)} ({detail})")
    tok, pos = found[0]
    return MODALITY_TOKENS[tok], pos


def strip_modality_token(text: str) -> str:
    return " ".join(_MOD_RE.sub(" ", text).split())


def validate_record(record: Any) -> list[str]:
    """All invariant violations of ``record``; an empty list means valid.

    Never raises, whatever the input.
    """
    try:
        return _violations(record)
    except Exception as exc:  # validation is total
        return [f"unvalidatable record: {type(exc).__name__}: {exc}"]


def _violations(record: Any) -> list[str]:
    out: list[str] = []
    rid = getattr(record, "id", None)
    if not isinstance(rid, str) or not rid:
        out.append("id must be a nonempty string")
    task = getattr(record, "task", None)
    if task not in TASKS:
        out.append(f"task {task!r} is not one of {TASKS}")
    modality = getattr(record, "modality", None)
    try:
        modality = Modality.parse(modality) if modality is not None else None
    except ValueError:
        modality = None
    if modality is None:
        out.append(f"modality {getattr(record, 'modality', None)!r} is not one of VIS, AUD, AUD_VIS")

    media = getattr(record, "media", None)
    if not isinstance(media, MediaRef):
        out.append("media reference missing")
    elif modality is not None:
        if media.synthetic_spec is not None and not isinstance(media.synthetic_spec, dict):
            out.append("media.synthetic_spec must be an object")
        elif media.has_frames != modality.visual or media.has_audio != modality.audio:
            out.append(
                f"media/modality mismatch: {modality.value} needs frames={modality.visual}, audio={modality.audio}; "
                f"got frames={media.has_frames}, audio={media.has_audio}"
            )

    turns = getattr(record, "turns", None)
    if not isinstance(turns, (list, tuple)) or not turns:
        out.append("turns must be a nonempty list")
        return out
    well_formed = True
    for i, t in enumerate(turns):
        role = getattr(t, "role", None)
        text = getattr(t, "text", None)
        if role not in ROLES:
            out.append(f"turn {i}: role {role!r} is not human/assistant")
            well_formed = False
        if not isinstance(text, str) or not text.strip():
            out.append(f"turn {i}: text must be a nonempty string")
            well_formed = False
        expected = ROLES[i % 2]
        if role in ROLES and role != expected:
            out.append(f"turn {i}: expected a {expected} turn (turns alternate, starting with human)")
    if len(turns) % 2:
        out.append("conversation must end with an assistant turn")
    if not well_formed:
        return out

    hits = [(i, m.group(0)) for i, t in enumerate(turns) for m in _MOD_RE.finditer(t.text)]
    if len(hits) != 1:
        out.append(f"expected exactly one modality token across turns, found {len(hits)}")
    else:
        idx, tok = hits[0]
        if idx != 0:
            out.append(f"modality token must be in the first human turn, found in turn {idx}")
        if modality is not None and MODALITY_TOKENS[tok] is not modality:
            out.append(f"modality token {tok} disagrees with record modality {modality.value}")
    return out


@dataclass
class RenderedSequence:
    input_ids: np.ndarray
    target_ids: np.ndarray
    loss_mask: np.ndarray  # loss_mask[i]: is target_ids[i] (= input_ids[i+1]) supervised
    media_slot: int
    modality: Modality
    human_spans: list[tuple[int, int]]
    assistant_spans: list[tuple[int, int]]  # content + terminating EOS

    def __len__(self) -> int:
        return len(self.input_ids)

    @property
    def supervised_tokens(self) -> np.ndarray:
        """Token-level view of the mask: which input positions are predicted with loss."""
        return np.concatenate([[False], self.loss_mask[:-1]])


def _split_at_token(text: str) -> tuple[list[str], list[str]]:
    m = _MOD_RE.search(text)
    if m is None:
        return [], tokenize(text)
    return tokenize(text[: m.start()]), tokenize(text[m.end():])


def render_conversation(record: InstructionRecord, vocab: Vocabulary, system_prompt: str = "") -> RenderedSequence:
    """[BOS] system (HUMAN: human-text ASSISTANT: assistant-text EOS)* with the media token excised."""
    problems = validate_record(record)
    if problems:
        raise RecordValidationError(problems)
    ids: list[int] = [BOS] + vocab.encode(system_prompt)
    supervised: list[bool] = [False] * len(ids)
    human_spans, assistant_spans = [], []
    slot = -1
    for i in range(0, len(record.turns), 2):
        human, assistant = record.turns[i], record.turns[i + 1]
        ids.append(HUMAN)
        supervised.append(False)
        start = len(ids)
        if i == 0:
            before, after = _split_at_token(human.text)
            words = before + after
            slot = start + len(before)
        else:
            words = tokenize(human.text)
        ids.extend(vocab.id(w) for w in words)
        supervised.extend([False] * len(words))
        human_spans.append((start, len(ids)))
        ids.append(ASSISTANT)
        supervised.append(False)
        start = len(ids)
        content = vocab.encode(assistant.text) + [EOS]
        ids.extend(content)
        supervised.extend([True] * len(content))
        assistant_spans.append((start, len(ids)))
    input_ids = np.asarray(ids, dtype=np.int64)
    target_ids = np.append(input_ids[1:], PAD)
    loss_mask = np.append(np.asarray(supervised[1:], dtype=bool), False)
    return RenderedSequence(input_ids, target_ids, loss_mask, slot, record.modality, human_spans, assistant_spans)


def render_prompt(instruction: str, vocab: Vocabulary, system_prompt: str = "") -> tuple[np.ndarray, int, Modality | None]:
    """Ids for a single human turn followed by the ASSISTANT marker, ready for decoding.

    Returns (ids, media_slot, modality); without a modality token the slot is
    the start of the human text and the modality is None.
    """
    found = _MOD_RE.findall(instruction)
    if len(found) > 1:
        raise StructureError(f"instruction holds {len(found)} modality tokens")
    modality = MODALITY_TOKENS[found[0]] if found else None
    ids = [BOS] + vocab.encode(system_prompt) + [HUMAN]
    before, after = _split_at_token(instruction)
    slot = len(ids) + len(before)
    ids += [vocab.id(w) for w in before + after] + [ASSISTANT]
    return np.asarray(ids, dtype=np.int64), slot, modality

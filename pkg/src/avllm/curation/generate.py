"""Turning a generation reply into a validated instruction record."""

from __future__ import annotations

import re

from ..instruction import InstructionRecord, MediaRef, Turn, validate_record
from ..modality import Modality

_TAG = re.compile(r"^\s*(HUMAN|ASSISTANT):\s*", re.MULTILINE)

CAPTION_INSTRUCTIONS = {
    Modality.VIS: "Describe the video in detail.",
    Modality.AUD: "Describe the audio in detail.",
    Modality.AUD_VIS: "Describe the video and its sound in detail.",
}


class ResponseParseError(ValueError):
    def __init__(self, message: str, raw: str):
        super().__init__(f"{message}; raw reply: {raw[:200]!r}")
        self.raw = raw


class RecordRejected(ValueError):
    def __init__(self, violations: list[str]):
        super().__init__("; ".join(violations))
        self.violations = violations


def parse_dialogue(raw: str) -> list[Turn]:
    """Alternating HUMAN:/ASSISTANT: blocks, starting with HUMAN."""
    parts = _TAG.split(raw)
    if parts[0].strip():
        raise ResponseParseError("text before the first role tag", raw)
    pairs = list(zip(parts[1::2], parts[2::2]))
    if not pairs:
        raise ResponseParseError("no HUMAN:/ASSISTANT: tags", raw)
    if not any(tag == "ASSISTANT" for tag, _ in pairs):
        raise ResponseParseError("missing ASSISTANT: block", raw)
    turns = []
    for i, (tag, text) in enumerate(pairs):
        expected = "HUMAN" if i % 2 == 0 else "ASSISTANT"
        if tag != expected:
            raise ResponseParseError(f"block {i + 1} is {tag}, expected {expected}", raw)
        text = text.strip()
        if not text:
            raise ResponseParseError(f"block {i + 1} ({tag}) is empty", raw)
        turns.append(Turn(tag.lower(), text))
    if len(turns) % 2:
        raise ResponseParseError("dialogue ends on a HUMAN block", raw)
    return turns


def parse_description(raw: str) -> str:
    text = raw.strip()
    if not text:
        raise ResponseParseError("empty description", raw)
    if _TAG.search(text):
        raise ResponseParseError("description contains role tags", raw)
    return " ".join(text.split())


def generate_record(client, prompt: str, task: str, modality: Modality | str, media: MediaRef, record_id: str, max_tokens: int = 512) -> InstructionRecord:
    """One request; raises on parse failure or validation rejection."""
    if not prompt.strip():
        raise ValueError("prompt is empty")
    modality = Modality.parse(modality)
    raw = client.complete(prompt, max_tokens)
    if task == "caption":
        turns = [Turn("human", CAPTION_INSTRUCTIONS[modality]), Turn("assistant", parse_description(raw))]
    else:
        turns = parse_dialogue(raw)
    turns[0] = Turn("human", f"{modality.token}\n{turns[0].text}")
    rec = InstructionRecord(record_id, task, modality, media, turns)
    violations = validate_record(rec)
    if violations:
        raise RecordRejected(violations)
    return rec

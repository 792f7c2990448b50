"""Textual media contexts built from frame and segment captions."""

from __future__ import annotations

from dataclasses import dataclass


class ContextError(ValueError):
    pass


@dataclass(frozen=True)
class MediaContext:
    visual: tuple[str, ...] | None = None
    audio: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        if not self.visual and not self.audio:
            raise ContextError("a context needs frame captions, audio captions, or both")
        for part in (self.visual or ()) + (self.audio or ()):
            if not isinstance(part, str) or not part.strip():
                raise ContextError("captions must be nonempty strings")

    @property
    def has_visual(self) -> bool:
        return bool(self.visual)

    @property
    def has_audio(self) -> bool:
        return bool(self.audio)


def _clean(captions, what: str) -> tuple[str, ...] | None:
    if captions is None:
        return None
    out = []
    for i, c in enumerate(captions):
        c = str(c).strip()
        if not c:
            raise ContextError(f"{what} caption {i + 1} is empty")
        out.append(c)
    return tuple(out) or None


def build_context(frame_captions=None, audio_captions=None) -> MediaContext:
    """Trimmed, order-preserving context; at least one list must be nonempty."""
    v = _clean(frame_captions, "frame")
    a = _clean(audio_captions, "audio")
    if v is None and a is None:
        raise ContextError("both caption lists are empty")
    return MediaContext(v, a)

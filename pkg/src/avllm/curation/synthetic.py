"""Deterministic synthetic videos: a moving coloured rectangle plus a pure tone."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..config import MediaConfig
from ..encoding import AudioSegments, VideoFrames

# name -> (rgb, shape)
VISUAL_CLASSES: dict[str, tuple[tuple[float, float, float], str]] = {
    "red_square": ((1.0, 0.0, 0.0), "square"),
    "green_square": ((0.0, 1.0, 0.0), "square"),
    "blue_bar": ((0.0, 0.0, 1.0), "bar"),
    "yellow_bar": ((1.0, 1.0, 0.0), "bar"),
}

# class index c plays a sinusoid at base_frequency * (c + 1)
AUDIO_CLASSES: tuple[str, ...] = ("hum", "beep", "whistle", "chirp")


class UnknownClassError(KeyError):
    pass


@dataclass(frozen=True)
class SyntheticSpec:
    visual_class: str | None = None
    audio_class: str | None = None
    seed: int = 0

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticSpec":
        return cls(d.get("visual_class"), d.get("audio_class"), int(d.get("seed", 0)))


def visual_words(name: str) -> str:
    """'red_square' -> 'red square'."""
    if name not in VISUAL_CLASSES:
        raise UnknownClassError(f"unknown visual class {name!r}; known: {sorted(VISUAL_CLASSES)}")
    return name.replace("_", " ")


def audio_frequency(name_or_index: str | int, base_frequency: float) -> float:
    if isinstance(name_or_index, str):
        if name_or_index not in AUDIO_CLASSES:
            raise UnknownClassError(f"unknown audio class {name_or_index!r}; known: {list(AUDIO_CLASSES)}")
        c = AUDIO_CLASSES.index(name_or_index)
    else:
        c = int(name_or_index)
        if not 0 <= c < len(AUDIO_CLASSES):
            raise UnknownClassError(f"audio class index {c} out of range")
    return base_frequency * (c + 1)


def _where(x_center: float, width: int) -> str:
    third = width / 3
    return "left" if x_center < third else ("center" if x_center < 2 * third else "right")


def _place(where: str) -> str:
    return "in the center" if where == "center" else f"on the {where}"


def _frames(name: str, media: MediaConfig, rng: np.random.Generator) -> tuple[np.ndarray, list[str]]:
    rgb, shape = VISUAL_CLASSES[name]
    T, H, W = media.frames, media.height, media.width
    if shape == "square":
        rh = rw = max(2, (3 * H) // 8)
    else:
        rh, rw = max(1, H // 6), max(2, W // 2)
    x0 = rng.uniform(0, W - rw)
    y0 = int(rng.integers(0, H - rh + 1))
    velocity = rng.uniform(-1.0, 1.0) * W / max(T, 1)
    data = np.clip(0.1 + 0.03 * rng.standard_normal((T, H, W, 3)), 0.0, 1.0)
    captions = []
    word = visual_words(name)
    for t in range(T):
        # bounce between the walls
        span = W - rw
        pos = x0 + velocity * t
        if span > 0:
            pos = pos % (2 * span)
            pos = 2 * span - pos if pos > span else pos
        x = int(round(pos))
        data[t, y0 : y0 + rh, x : x + rw] = rgb
        captions.append(f"a {word} {_place(_where(x + rw / 2, W))}")
    return data, captions


def _audio(name: str, media: MediaConfig, rng: np.random.Generator) -> tuple[np.ndarray, list[str]]:
    f = audio_frequency(name, media.base_frequency)
    K, M = media.segments, media.samples_per_segment
    t = np.arange(K * M) / media.sample_rate
    amp = rng.uniform(0.5, 1.0)
    phase = rng.uniform(0, 2 * np.pi)
    wave = amp * np.sin(2 * np.pi * f * t + phase) + 0.05 * rng.standard_normal(K * M)
    return wave.reshape(K, M), [f"a {name} sound"] * K


def synthesize_media(spec: SyntheticSpec, media: MediaConfig) -> tuple[VideoFrames | None, AudioSegments | None, dict[str, list[str]]]:
    """Frames and/or audio for ``spec`` plus ground-truth frame and segment captions."""
    if spec.visual_class is not None and spec.visual_class not in VISUAL_CLASSES:
        raise UnknownClassError(f"unknown visual class {spec.visual_class!r}")
    if spec.audio_class is not None and spec.audio_class not in AUDIO_CLASSES:
        raise UnknownClassError(f"unknown audio class {spec.audio_class!r}")
    if media.height % media.patch or media.width % media.patch:
        raise ValueError(f"H={media.height}, W={media.width} not divisible by P={media.patch}")
    # independent streams so a VIS-only and an AUD_VIS view of one video share pixels
    vis_rng, aud_rng = (np.random.default_rng([spec.seed, k]) for k in (0, 1))
    frames = audio = None
    captions: dict[str, list[str]] = {"frames": [], "audio": []}
    if spec.visual_class is not None:
        data, captions["frames"] = _frames(spec.visual_class, media, vis_rng)
        frames = VideoFrames(data.astype(np.float32))
    if spec.audio_class is not None:
        data, captions["audio"] = _audio(spec.audio_class, media, aud_rng)
        audio = AudioSegments(data.astype(np.float32), media.sample_rate)
    return frames, audio, captions

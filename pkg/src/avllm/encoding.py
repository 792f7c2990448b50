"""Frame/audio encoders, token reduction, projection and prefix assembly.

Video frames are encoded one frame at a time by a small ViT. Each frame's
[CLS] state becomes a temporal token (T of them), and patch states averaged
over time become spatial tokens (N of them). Every audio segment maps to one
auditory token (K of them). Three separate linear projectors lift these
tokens to the LM width, and the results are laid out as temporal, spatial,
audio.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numerics as F
from .config import MediaConfig, ModelConfig
from .modality import Modality
from .nn import block, dense, init_block, init_layernorm, init_linear, norm
from .numerics import ShapeError, Tensor
from .params import ParamStore


class ModalityMismatchError(ValueError):
    pass


@dataclass
class VideoFrames:
    data: np.ndarray  # (T, H, W, 3) in [0, 1]

    def __post_init__(self) -> None:
        if self.data.ndim != 4 or self.data.shape[-1] != 3 or self.data.shape[0] < 1:
            raise ShapeError(f"frames must be (T>=1, H, W, 3), got {self.data.shape}")

    @property
    def T(self) -> int:
        return self.data.shape[0]

    @property
    def H(self) -> int:
        return self.data.shape[1]

    @property
    def W(self) -> int:
        return self.data.shape[2]

    @classmethod
    def from_image(cls, image: np.ndarray) -> "VideoFrames":
        """An image is a one-frame video."""
        return cls(image[None])


@dataclass
class AudioSegments:
    data: np.ndarray  # (K, M)
    sample_rate: int

    def __post_init__(self) -> None:
        if self.data.ndim != 2 or self.data.shape[0] < 1 or self.data.shape[1] < 1:
            raise ShapeError(f"audio segments must be (K>=1, M), got {self.data.shape}")

    @property
    def K(self) -> int:
        return self.data.shape[0]

    @property
    def M(self) -> int:
        return self.data.shape[1]

    @classmethod
    def from_waveform(cls, wave: np.ndarray, segments: int, sample_rate: int) -> "AudioSegments":
        """Split a clip into ``segments`` equal, non-overlapping pieces (tail samples dropped)."""
        m = len(wave) // segments
        if m == 0:
            raise ShapeError(f"clip of {len(wave)} samples is too short for {segments} segments")
        return cls(np.asarray(wave[: m * segments]).reshape(segments, m), sample_rate)


@dataclass
class FrameEmbeddings:
    cls: Tensor  # (T, D)
    patches: Tensor  # (T, N, D)


@dataclass
class ReducedTokens:
    temporal: Tensor | None = None  # (T, D_t)
    spatial: Tensor | None = None  # (N, D_s)
    audio: Tensor | None = None  # (K, D_a)


@dataclass(frozen=True)
class PrefixLayout:
    temporal: tuple[int, int] | None
    spatial: tuple[int, int] | None
    audio: tuple[int, int] | None

    @property
    def length(self) -> int:
        return sum(b - a for a, b in self.spans())

    def spans(self) -> list[tuple[int, int]]:
        return [s for s in (self.temporal, self.spatial, self.audio) if s is not None]


@dataclass
class MultimodalPrefix:
    tokens: Tensor  # (L, D_l)
    layout: PrefixLayout
    modality: Modality

    def __len__(self) -> int:
        return self.tokens.shape[0]


# -- parameters ---------------------------------------------------------
def init_encoder_params(store: ParamStore, media: MediaConfig, model: ModelConfig, rng: np.random.Generator) -> None:
    D = model.vis_dim
    patch_dim = media.patch * media.patch * 3
    init_linear(store, "encoder.visual.patch_embed", patch_dim, D, rng)
    store.add("encoder.visual.cls", rng.standard_normal(D).astype(np.float32))
    store.add("encoder.visual.pos", (rng.standard_normal((media.num_patches + 1, D)) * 0.5).astype(np.float32))
    for i in range(model.vis_layers):
        init_block(store, f"encoder.visual.blocks.{i}", D, rng, std=None, out_std=0.5 / np.sqrt(D))
    init_layernorm(store, "encoder.visual.ln_f", D)

    n_feat = media.audio_window // 2 + 1
    init_linear(store, "encoder.audio.fc1", n_feat, model.d_a, rng)
    init_linear(store, "encoder.audio.fc2", model.d_a, model.d_a, rng)


def init_projector_params(store: ParamStore, model: ModelConfig, rng: np.random.Generator) -> None:
    init_linear(store, "projector.visual_temporal", model.d_t, model.d_l, rng)
    init_linear(store, "projector.visual_spatial", model.d_s, model.d_l, rng)
    init_linear(store, "projector.audio", model.d_a, model.d_l, rng)


# -- visual path --------------------------------------------------------
def patchify(frames: VideoFrames | np.ndarray, P: int) -> np.ndarray:
    """(T, H, W, 3) -> (T, N, P*P*3); patches row-major, pixels channel-last."""
    data = frames.data if isinstance(frames, VideoFrames) else np.asarray(frames)
    T, H, W, C = data.shape
    if P <= 0 or H % P or W % P:
        raise ShapeError(f"frame size H={H}, W={W} is not divisible by patch size P={P}")
    x = data.reshape(T, H // P, P, W // P, P, C).transpose(0, 1, 3, 2, 4, 5)
    return np.ascontiguousarray(x.reshape(T, (H // P) * (W // P), P * P * C))


def encode_frames(patches: np.ndarray | Tensor, store: ParamStore, n_heads: int) -> FrameEmbeddings:
    """Run each frame independently through patch-embed + [CLS] + ViT blocks.

    Frames sit on the batch axis, so attention never crosses frames.
    """
    x = patches if isinstance(patches, Tensor) else Tensor(patches, dtype=store["encoder.visual.cls"].dtype)
    W = store["encoder.visual.patch_embed.W"]
    if x.ndim != 3 or x.shape[-1] != W.shape[0]:
        raise ShapeError(f"patch width {x.shape[-1]} does not match the patch embedding input {W.shape[0]}")
    T, N, _ = x.shape
    pos = store["encoder.visual.pos"]
    if pos.shape[0] != N + 1:
        raise ShapeError(f"{N} patches per frame but positional table has {pos.shape[0] - 1} patch slots")
    h = dense(x, store, "encoder.visual.patch_embed")
    cls = F.add(Tensor(np.zeros((T, 1, h.shape[-1]), dtype=h.dtype)), store["encoder.visual.cls"])
    h = F.concat([cls, h], axis=1) + pos
    i = 0
    while f"encoder.visual.blocks.{i}.ln1.g" in store:
        h = block(h, store, f"encoder.visual.blocks.{i}", n_heads, causal=False)
        i += 1
    h = norm(h, store, "encoder.visual.ln_f")
    return FrameEmbeddings(cls=h[:, 0, :], patches=h[:, 1:, :])


def temporal_tokens(emb: FrameEmbeddings) -> Tensor:
    """Per-frame [CLS] states stacked in frame order: (T, D_t)."""
    return emb.cls


def spatial_tokens(emb: FrameEmbeddings) -> Tensor:
    """Patch states mean-pooled over time: (N, D_s)."""
    return F.mean(emb.patches, axis=0)


# -- audio path ---------------------------------------------------------
def audio_features(segments: np.ndarray, window: int) -> np.ndarray:
    """Log-magnitude spectrum per segment, averaged over folded windows: (K, window//2+1)."""
    K, M = segments.shape
    if M % window:
        raise ShapeError(f"segment length {M} is not a multiple of the analysis window {window}")
    frames = segments.reshape(K, M // window, window) * np.hanning(window)
    mag = np.abs(np.fft.rfft(frames, axis=-1)).mean(axis=1)
    return np.log1p(mag)


def encode_audio(segments: AudioSegments, store: ParamStore, samples_per_segment: int, window: int) -> Tensor:
    """One auditory token per segment, in segment order: (K, D_a)."""
    if segments.M != samples_per_segment:
        raise ShapeError(f"segments have {segments.M} samples but the audio encoder expects M={samples_per_segment}")
    dtype = store["encoder.audio.fc1.W"].dtype
    feats = Tensor(audio_features(segments.data, window), dtype=dtype)
    h = F.gelu(dense(feats, store, "encoder.audio.fc1"))
    return dense(h, store, "encoder.audio.fc2")


# -- projection + layout ------------------------------------------------
_PROJECTORS = {
    "temporal": "projector.visual_temporal",
    "spatial": "projector.visual_spatial",
    "audio": "projector.audio",
}


def assemble_prefix(reduced: ReducedTokens, store: ParamStore, modality: Modality | str) -> MultimodalPrefix:
    """Project each present token group to D_l and concatenate temporal, spatial, audio."""
    modality = Modality.parse(modality)
    required = {"temporal": modality.visual, "spatial": modality.visual, "audio": modality.audio}
    problems = []
    for part, needed in required.items():
        present = getattr(reduced, part) is not None
        if needed and not present:
            problems.append(f"{modality.value} requires {part} tokens")
        if present and not needed:
            problems.append(f"{modality.value} does not take {part} tokens")
    if problems:
        raise ModalityMismatchError("; ".join(problems))

    pieces: list[Tensor] = []
    spans: dict[str, tuple[int, int] | None] = {"temporal": None, "spatial": None, "audio": None}
    offset = 0
    for part in ("temporal", "spatial", "audio"):
        tokens = getattr(reduced, part)
        if tokens is None:
            continue
        projected = dense(tokens, store, _PROJECTORS[part])
        pieces.append(projected)
        spans[part] = (offset, offset + projected.shape[0])
        offset += projected.shape[0]
    return MultimodalPrefix(F.concat(pieces, axis=0), PrefixLayout(**spans), modality)


class MediaEncoder:
    """Bundles the frozen encoders; counts invocations per branch."""

    def __init__(self, store: ParamStore, media: MediaConfig, model: ModelConfig):
        self.store = store
        self.media = media
        self.model = model
        self.visual_calls = 0
        self.audio_calls = 0

    def encode_visual(self, frames: VideoFrames) -> tuple[Tensor, Tensor]:
        self.visual_calls += 1
        emb = encode_frames(patchify(frames, self.media.patch), self.store, self.model.vis_heads)
        return temporal_tokens(emb), spatial_tokens(emb)

    def encode_audio(self, segments: AudioSegments) -> Tensor:
        self.audio_calls += 1
        return encode_audio(segments, self.store, self.media.samples_per_segment, self.media.audio_window)

    def reduce(self, frames: VideoFrames | None, audio: AudioSegments | None) -> ReducedTokens:
        out = ReducedTokens()
        if frames is not None:
            out.temporal, out.spatial = self.encode_visual(frames)
        if audio is not None:
            out.audio = self.encode_audio(audio)
        return out

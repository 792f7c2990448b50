"""The full audio-visual LM: frozen encoders, three projectors, decoder LM."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .config import RunConfig
from .curation.synthetic import SyntheticSpec, synthesize_media
from .encoding import AudioSegments, MediaEncoder, VideoFrames, init_encoder_params, init_projector_params
from .instruction import InstructionRecord, MediaRef
from .lm import init_lm_params
from .params import ParamStore
from .vocab import Vocabulary


class AVLLM:
    def __init__(self, cfg: RunConfig, vocab: Vocabulary, seed: int | None = None):
        if len(vocab) > cfg.model.vocab_size:
            raise ValueError(f"vocabulary has {len(vocab)} entries but the model holds {cfg.model.vocab_size}")
        self.cfg = cfg
        self.vocab = vocab
        self.seed = cfg.seed if seed is None else seed
        rng = np.random.default_rng(self.seed)
        self.store = ParamStore()
        init_encoder_params(self.store, cfg.media, cfg.model, rng)
        init_projector_params(self.store, cfg.model, rng)
        init_lm_params(self.store, cfg.model, rng)
        self.store.set_trainable(())
        self.encoder = MediaEncoder(self.store, cfg.media, cfg.model)
        self._media_cache: dict[str, tuple] = {}

    def astype(self, dtype) -> "AVLLM":
        """Cast every parameter in place (f64 for gradient checks)."""
        self.store = self.store.astype(dtype)
        self.encoder.store = self.store
        return self

    @property
    def system_prompt(self) -> str:
        return self.cfg.data.system_prompt

    def load_media(self, media: MediaRef) -> tuple[VideoFrames | None, AudioSegments | None]:
        key = json.dumps(media.to_dict(), sort_keys=True)
        if key in self._media_cache:
            return self._media_cache[key]
        frames = audio = None
        if media.synthetic_spec is not None:
            frames, audio, _ = synthesize_media(SyntheticSpec.from_dict(media.synthetic_spec), self.cfg.media)
        if media.frames is not None:
            frames = VideoFrames(np.load(Path(media.frames)).astype(np.float32))
        if media.audio is not None:
            audio = AudioSegments(np.load(Path(media.audio)).astype(np.float32), self.cfg.media.sample_rate)
        self._media_cache[key] = (frames, audio)
        return frames, audio

    def media_for(self, record: InstructionRecord) -> tuple[VideoFrames | None, AudioSegments | None]:
        return self.load_media(record.media)

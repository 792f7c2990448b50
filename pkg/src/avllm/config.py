"""Run configuration: dataclasses, JSON loading with validation, hashing."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any


class ConfigError(ValueError):
    """Raised with every violation found, not just the first."""

    def __init__(self, violations: list[str]):
        self.violations = list(violations)
        super().__init__("invalid config:\n  " + "\n  ".join(self.violations))


@dataclass
class MediaConfig:
    frames: int = 32  # T, frames sampled per video
    height: int = 32
    width: int = 32
    patch: int = 8  # P
    segments: int = 4  # K, audio segments per clip
    samples_per_segment: int = 1024  # M
    sample_rate: int = 8000
    audio_window: int = 128
    base_frequency: float = 250.0

    @property
    def num_patches(self) -> int:
        return (self.height // self.patch) * (self.width // self.patch)


@dataclass
class ModelConfig:
    vis_dim: int = 64  # D
    vis_heads: int = 4
    vis_layers: int = 2
    d_t: int = 64
    d_s: int = 64
    d_a: int = 64
    d_l: int = 64
    lm_layers: int = 4
    lm_heads: int = 4
    max_seq: int = 256
    vocab_size: int = 512


@dataclass
class StageSettings:
    lr: float
    batch_size: int
    epochs: int
    warmup_ratio: float = 0.03
    max_steps: int | None = None
    weight_decay: float = 0.0
    eps: float = 1e-8
    beta1: float = 0.9
    beta2: float = 0.98


def _pretrain_defaults() -> StageSettings:
    return StageSettings(lr=2e-3, batch_size=16, epochs=3)


def _sft_defaults() -> StageSettings:
    return StageSettings(lr=2e-5, batch_size=8, epochs=1)


@dataclass
class ClientConfig:
    endpoint: str = "http://localhost:8000/generate"
    token_env: str = "AVLLM_GEN_TOKEN"
    timeout: float = 60.0
    max_retries: int = 3
    parallelism: int = 4
    max_tokens: int = 512
    max_rejections: int = 3


@dataclass
class DataConfig:
    train_path: str | None = None
    eval_path: str | None = None
    pretrain_tasks: list[str] = field(default_factory=lambda: ["caption"])
    sft_tasks: list[str] = field(default_factory=lambda: ["conversation", "reasoning"])
    system_prompt: str = "A chat between a curious user and an assistant that understands videos and sounds."


@dataclass
class RunConfig:
    media: MediaConfig = field(default_factory=MediaConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    pretrain: StageSettings = field(default_factory=_pretrain_defaults)
    sft: StageSettings = field(default_factory=_sft_defaults)
    schedule: str = "mat"
    mix: dict[str, float] | None = None  # None: proportional to dataset composition
    data: DataConfig = field(default_factory=DataConfig)
    client: ClientConfig = field(default_factory=ClientConfig)
    metrics: list[str] = field(default_factory=lambda: ["qa_top1", "cider"])
    max_new_tokens: int = 24
    seed: int = 0

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    def config_hash(self) -> str:
        return config_digest(self.to_dict()).hex()

    def digest(self) -> bytes:
        return config_digest(self.to_dict())


def canonical_json(doc: Any) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"), ensure_ascii=True)


def config_digest(doc: dict) -> bytes:
    return hashlib.sha256(canonical_json(doc).encode("utf-8")).digest()


def _build(cls, raw: Any, path: str, violations: list[str]):
    """Instantiate dataclass ``cls`` from ``raw`` dict, recording unknown keys."""
    if not isinstance(raw, dict):
        violations.append(f"{path or '<root>'}: expected an object, got {type(raw).__name__}")
        return cls()
    fields = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in raw.items():
        where = f"{path}.{key}" if path else key
        if key not in fields:
            violations.append(f"{where}: unknown key")
            continue
        sub = _NESTED.get((cls, key))
        kwargs[key] = _build(sub, value, where, violations) if sub is not None else value
    if cls is StageSettings:
        base = _pretrain_defaults() if path == "pretrain" else _sft_defaults()
        merged = asdict(base)
        merged.update(kwargs)
        return StageSettings(**merged)
    return cls(**kwargs)


_NESTED = {
    (RunConfig, "media"): MediaConfig,
    (RunConfig, "model"): ModelConfig,
    (RunConfig, "pretrain"): StageSettings,
    (RunConfig, "sft"): StageSettings,
    (RunConfig, "data"): DataConfig,
    (RunConfig, "client"): ClientConfig,
}


def _positive_ints(obj, path: str, names: list[str], violations: list[str]) -> None:
    for name in names:
        v = getattr(obj, name)
        if not isinstance(v, int) or isinstance(v, bool) or v <= 0:
            violations.append(f"{path}.{name}: must be a positive integer, got {v!r}")


def validate(cfg: RunConfig) -> list[str]:
    v: list[str] = []
    m = cfg.media
    _positive_ints(m, "media", ["frames", "height", "width", "patch", "segments", "samples_per_segment", "sample_rate", "audio_window"], v)
    if not v:
        if m.height % m.patch or m.width % m.patch:
            v.append(f"media: H={m.height} and W={m.width} must be divisible by P={m.patch}")
        if m.samples_per_segment % m.audio_window:
            v.append(f"media: M={m.samples_per_segment} must be divisible by audio_window={m.audio_window}")
    md = cfg.model
    _positive_ints(md, "model", ["vis_dim", "vis_heads", "vis_layers", "d_t", "d_s", "d_a", "d_l", "lm_layers", "lm_heads", "max_seq", "vocab_size"], v)
    if not any(s.startswith("model.") for s in v):
        if md.vis_dim % md.vis_heads:
            v.append(f"model: vis_dim={md.vis_dim} not divisible by vis_heads={md.vis_heads}")
        if md.d_l % md.lm_heads:
            v.append(f"model: d_l={md.d_l} not divisible by lm_heads={md.lm_heads}")
        if md.d_t != md.vis_dim or md.d_s != md.vis_dim:
            v.append(f"model: the toy vision encoder emits width {md.vis_dim}; d_t={md.d_t} and d_s={md.d_s} must match")
        if md.vocab_size < 16:
            v.append("model.vocab_size: must be at least 16 (reserved ids)")
    if not any(s.startswith("media") or s.startswith("model") for s in v):
        prefix_len = m.frames + m.num_patches + m.segments
        if prefix_len >= md.max_seq:
            v.append(f"model.max_seq={md.max_seq} leaves no room after a {prefix_len}-token prefix")
    for name in ("pretrain", "sft"):
        st = getattr(cfg, name)
        if not isinstance(st.lr, (int, float)) or st.lr <= 0:
            v.append(f"{name}.lr: must be positive")
        _positive_ints(st, name, ["batch_size", "epochs"], v)
        if not isinstance(st.warmup_ratio, (int, float)) or not 0 < st.warmup_ratio < 1:
            v.append(f"{name}.warmup_ratio: must be in (0, 1)")
        if st.max_steps is not None and (not isinstance(st.max_steps, int) or st.max_steps <= 0):
            v.append(f"{name}.max_steps: must be a positive integer or null")
    if cfg.schedule not in ("mat", "pt1", "pt2"):
        v.append(f"schedule: must be one of mat, pt1, pt2; got {cfg.schedule!r}")
    if cfg.mix is not None:
        if not isinstance(cfg.mix, dict) or set(cfg.mix) - {"VIS", "AUD", "AUD_VIS"}:
            v.append("mix: keys must be among VIS, AUD, AUD_VIS")
        elif any((not isinstance(x, (int, float))) or x < 0 for x in cfg.mix.values()) or abs(sum(cfg.mix.values()) - 1.0) > 1e-9:
            v.append("mix: ratios must be non-negative and sum to 1")
    for t in list(cfg.data.pretrain_tasks) + list(cfg.data.sft_tasks):
        if t not in ("caption", "conversation", "reasoning"):
            v.append(f"data: unknown task {t!r}")
    for metric in cfg.metrics:
        if metric not in ("qa_top1", "cider", "judge"):
            v.append(f"metrics: unknown metric {metric!r}")
    if not isinstance(cfg.seed, int):
        v.append("seed: must be an integer")
    return v


def config_from_dict(raw: dict) -> RunConfig:
    violations: list[str] = []
    cfg = _build(RunConfig, raw, "", violations)
    if not violations:
        violations = validate(cfg)
    if violations:
        raise ConfigError(violations)
    return cfg


def load_config(path: str | Path | None) -> RunConfig:
    """Parse a JSON config file; missing keys take documented defaults."""
    if path is None:
        return config_from_dict({})
    text = Path(path).read_text(encoding="utf-8")
    if not text.strip():
        return config_from_dict({})
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([f"{path}: not valid JSON ({exc})"]) from None
    return config_from_dict(raw)

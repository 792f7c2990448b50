import numpy as np
import pytest

from avllm.config import MediaConfig, ModelConfig, RunConfig, StageSettings
from avllm.curation.toy import toy_corpus
from avllm.model import AVLLM
from avllm.vocab import build_vocab


def tiny_config(**media_overrides) -> RunConfig:
    """Small dims so per-test training and grad checks stay fast."""
    media = dict(frames=2, height=16, width=16, patch=8, segments=2, samples_per_segment=256, audio_window=64)
    media.update(media_overrides)
    return RunConfig(
        media=MediaConfig(**media),
        model=ModelConfig(vis_dim=16, vis_heads=2, vis_layers=1, d_t=16, d_s=16, d_a=16, d_l=16, lm_layers=2, lm_heads=2, max_seq=128, vocab_size=96),
        pretrain=StageSettings(lr=1e-2, batch_size=6, epochs=1, max_steps=6),
        sft=StageSettings(lr=1e-2, batch_size=6, epochs=1, max_steps=6),
    )


def tiny_model(cfg: RunConfig | None = None, seed: int = 0, records=None) -> AVLLM:
    cfg = cfg or tiny_config()
    records = records if records is not None else toy_corpus(4, "conversation", 0) + toy_corpus(4, "caption", 0)
    vocab = build_vocab([t.text for r in records for t in r.turns] + [cfg.data.system_prompt], cfg.model.vocab_size)
    return AVLLM(cfg, vocab, seed)


@pytest.fixture
def cfg():
    return tiny_config()


@pytest.fixture
def rng():
    return np.random.default_rng(0)


# one line per acceptance criterion, echoed after the run even when output is captured
CRITERIA: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in sorted(CRITERIA, key=lambda s: int(s.split()[1].rstrip("]"))):
            terminalreporter.write_line(line)

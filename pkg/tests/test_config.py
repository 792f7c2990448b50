import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from avllm.config import ConfigError, RunConfig, config_from_dict, load_config, validate


def test_defaults():
    cfg = load_config(None)
    assert (cfg.media.frames, cfg.media.segments) == (32, 4)
    assert (cfg.pretrain.lr, cfg.pretrain.epochs) == (2e-3, 3)
    assert (cfg.sft.lr, cfg.sft.epochs) == (2e-5, 1)
    assert cfg.schedule == "mat" and validate(cfg) == []


def test_partial_stage_keeps_stage_defaults(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"sft": {"batch_size": 3}, "media": {"frames": 8}}))
    cfg = load_config(p)
    assert cfg.sft.batch_size == 3 and cfg.sft.lr == 2e-5 and cfg.media.frames == 8


def test_empty_file_is_defaults(tmp_path):
    p = tmp_path / "c.json"
    p.write_text("  \n")
    assert load_config(p) == RunConfig()


@pytest.mark.parametrize("raw,needle", [
    ({"bogus": 1}, "bogus: unknown key"),
    ({"media": {"fps": 2}}, "media.fps"),
    ({"media": {"patch": 5}}, "divisible by P"),
    ({"model": {"d_l": 30, "lm_heads": 4}}, "lm_heads"),
    ({"sft": {"lr": -1}}, "sft.lr"),
    ({"schedule": "random"}, "schedule"),
    ({"mix": {"VIS": 0.5, "AUD": 0.2}}, "sum to 1"),
    ({"metrics": ["bleu"]}, "bleu"),
    ({"model": {"max_seq": 20}}, "max_seq"),
    ({"media": "big"}, "expected an object"),
])
def test_violations_are_reported(raw, needle):
    with pytest.raises(ConfigError) as e:
        config_from_dict(raw)
    assert needle in str(e.value)


def test_all_violations_listed_at_once():
    with pytest.raises(ConfigError) as e:
        config_from_dict({"schedule": "x", "metrics": ["y"]})
    assert "schedule" in str(e.value) and "'y'" in str(e.value)


def test_bad_json(tmp_path):
    p = tmp_path / "c.json"
    p.write_text("{")
    with pytest.raises(ConfigError):
        load_config(p)


@given(st.integers(1, 64), st.sampled_from(["mat", "pt1", "pt2"]))
def test_hash_tracks_content(frames, schedule):
    a = config_from_dict({"media": {"frames": frames}, "schedule": schedule})
    b = config_from_dict({"schedule": schedule, "media": {"frames": frames}})
    assert a.config_hash() == b.config_hash()
    c = config_from_dict({"media": {"frames": frames + 1}, "schedule": schedule})
    assert c.config_hash() != a.config_hash()

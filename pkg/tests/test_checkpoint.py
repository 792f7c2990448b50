import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from avllm.curation.toy import toy_corpus
from avllm.training.checkpoint import (
    MAGIC,
    Checkpoint,
    CheckpointFormatError,
    CheckpointTruncatedError,
    CheckpointVersionError,
    ConfigMismatchError,
    UnknownTensorError,
    decode,
    encode,
    load_checkpoint,
    save_checkpoint,
)
from avllm.training.stages import SchedulePlan, StageConfig
from avllm.training.trainer import StageTrainer, load_params

from conftest import tiny_config, tiny_model

DIGEST = bytes(range(32))


def small():
    return Checkpoint(DIGEST, 7, {"a": [1, 2]}, {"w": np.arange(6, dtype=np.float32).reshape(2, 3), "n": np.array([3], dtype=np.int64)})


arrays = hnp.arrays(
    st.sampled_from([np.float32, np.float64, np.int64]),
    hnp.array_shapes(min_dims=0, max_dims=3, min_side=0, max_side=4),
)


@settings(max_examples=40, deadline=None)
@given(st.dictionaries(st.text(min_size=1, max_size=12), arrays, max_size=4), st.integers(0, 2**63))
def test_encode_decode_roundtrip(tensors, step):
    back = decode(encode(Checkpoint(DIGEST, step, {"k": "v"}, tensors)))
    assert back.step == step and back.state == {"k": "v"} and back.config_digest == DIGEST
    assert set(back.tensors) == set(tensors)
    for k, a in tensors.items():
        assert back.tensors[k].dtype == a.dtype and back.tensors[k].shape == a.shape
        assert back.tensors[k].tobytes() == a.tobytes()


def test_header_layout():
    buf = encode(small())
    assert buf[:4] == MAGIC and buf[4] == 1 and buf[5:37] == DIGEST
    assert struct.unpack("<Q", buf[37:45])[0] == 7


def test_bad_magic():
    with pytest.raises(CheckpointFormatError):
        decode(b"NOPE" + encode(small())[4:])


def test_version_mismatch():
    buf = bytearray(encode(small()))
    buf[4] = 9
    with pytest.raises(CheckpointVersionError):
        decode(bytes(buf))


@pytest.mark.parametrize("cut", [2, 10, 40, 50, -1, -13])
def test_truncation(cut):
    with pytest.raises(CheckpointTruncatedError):
        decode(encode(small())[:cut])


def test_trailing_garbage():
    with pytest.raises(CheckpointFormatError):
        decode(encode(small()) + b"\0")


def test_save_is_atomic_and_leaves_no_temp(tmp_path):
    p = save_checkpoint(small(), tmp_path / "x.ckpt")
    assert [f.name for f in tmp_path.iterdir()] == ["x.ckpt"]
    assert load_checkpoint(p).tensors["w"].tolist() == [[0, 1, 2], [3, 4, 5]]


def _trainer(seed=0, cfg=None):
    model = tiny_model(cfg, seed=seed)
    stage = StageConfig("sft", 1e-2, 4, 1, max_steps=12)
    return StageTrainer(model, toy_corpus(4, "conversation", seed), stage, SchedulePlan.named("pt2"), seed)


def test_resume_is_bitwise_identical(tmp_path):
    a = _trainer()
    a.run(4)
    path = save_checkpoint(a.checkpoint(), tmp_path / "mid.ckpt")
    tail_a = a.run(5)
    b = _trainer()
    b.restore(load_checkpoint(path))
    tail_b = b.run(5)
    assert tail_a == tail_b
    sa, sb = a.model.store.state_dict(), b.model.store.state_dict()
    assert all(sa[k].tobytes() == sb[k].tobytes() for k in sa)
    assert all(a.opt.m[k].tobytes() == b.opt.m[k].tobytes() for k in a.opt.m)


def test_resume_crosses_phase_boundary(tmp_path):
    a = _trainer()
    a.run(3)
    ck = a.checkpoint()
    rest_a = a.run()
    b = _trainer()
    b.restore(decode(encode(ck)))
    assert b.run() == rest_a
    assert len({r["phase"] for r in rest_a}) > 1


def test_config_mismatch_refused():
    ck = _trainer().checkpoint()
    other = _trainer(cfg=tiny_config(frames=4))
    with pytest.raises(ConfigMismatchError):
        other.restore(ck)
    with pytest.raises(ConfigMismatchError):
        load_params(other.model, ck)


def test_unknown_tensor_refused():
    t = _trainer()
    ck = t.checkpoint()
    ck.tensors["lm.extra.W"] = np.zeros(2, np.float32)
    with pytest.raises(UnknownTensorError):
        t.restore(ck)


def test_missing_tensor_refused():
    t = _trainer()
    ck = t.checkpoint()
    del ck.tensors["lm.head.W"]
    with pytest.raises(CheckpointFormatError):
        t.restore(ck)

import numpy as np
import pytest

from avllm import numerics as F
from avllm.config import ModelConfig
from avllm.lm import LogitSequence, generate, head, hidden_states, init_lm_params, lm_forward, lm_loss, SequenceInput
from avllm.numerics import ShapeError, Tensor
from avllm.params import ParamStore
from avllm.vocab import BOS, build_vocab

CFG = ModelConfig(d_l=16, lm_layers=2, lm_heads=2, max_seq=64, vocab_size=40)


def lm_store(dtype=np.float64, seed=0):
    s = ParamStore()
    init_lm_params(s, CFG, np.random.default_rng(seed))
    return s.astype(dtype)


def test_bos_only_logits_shape():
    out = lm_forward(None, [BOS], lm_store(), CFG)
    assert out.logits.shape == (1, 40)


def test_width_mismatch():
    with pytest.raises(ShapeError):
        lm_forward(Tensor(np.zeros((3, 8))), [BOS, 20], lm_store(), CFG)


def test_out_of_range_ids():
    with pytest.raises(ValueError):
        lm_forward(None, [BOS, 40], lm_store(), CFG)


@pytest.mark.parametrize("slot", [0, 2])
def test_causality(slot):
    rng = np.random.default_rng(0)
    store = lm_store()
    prefix = Tensor(rng.standard_normal((3, 16)))
    ids = np.array([BOS, 20, 21, 22, 23, 24])
    base = lm_forward(prefix, ids, store, CFG, slot)
    for j in range(1, len(ids)):
        changed = ids.copy()
        changed[j] = 30
        out = lm_forward(prefix, changed, store, CFG, slot)
        pos = base.text_positions[j]
        assert np.array_equal(out.logits.data[:pos], base.logits.data[:pos])


def test_prefix_occupies_slot_positions():
    store = lm_store()
    prefix = Tensor(np.random.default_rng(1).standard_normal((3, 16)))
    out = lm_forward(prefix, [BOS, 20, 21], store, CFG, slot=1)
    assert out.prefix_span == (1, 4)
    np.testing.assert_array_equal(out.text_positions, [0, 4, 5])


def _logits(data, n_text):
    return LogitSequence(Tensor(np.asarray(data, dtype=np.float64)), np.arange(n_text), (0, 0))


def test_uniform_logits_give_log_v():
    V = 7
    loss = lm_loss(_logits(np.zeros((4, V)), 4), [1, 2, 3, 4], [True, False, True, True])
    assert float(loss.data) == pytest.approx(np.log(V))


def test_one_hot_margin_drives_loss_to_zero():
    prev = np.inf
    for margin in (1.0, 5.0, 20.0, 60.0):
        z = np.zeros((2, 5))
        z[1, 3] = margin
        loss = float(lm_loss(_logits(z, 2), [0, 3], [False, True]).data)
        assert loss < prev
        prev = loss
    assert prev < 1e-20


def test_loss_matches_independent_softmax_oracle():
    rng = np.random.default_rng(2)
    z = rng.standard_normal((5, 6))
    t = rng.integers(0, 6, 5)
    m = np.array([True, True, False, True, False])
    oracle = np.mean([np.log(np.exp(z[i]).sum()) - z[i, t[i]] for i in range(5) if m[i]])
    assert float(lm_loss(_logits(z, 5), t, m).data) == pytest.approx(oracle, abs=1e-12)


def test_all_false_mask():
    with pytest.raises(ValueError):
        lm_loss(_logits(np.zeros((2, 3)), 2), [0, 1], [False, False])


def test_masked_positions_do_not_affect_loss():
    rng = np.random.default_rng(3)
    z = rng.standard_normal((4, 6))
    m = np.array([True, False, True, False])
    a = lm_loss(_logits(z, 4), [1, 2, 3, 4], m).data
    z[~m] += rng.standard_normal((2, 6)) * 100
    b = lm_loss(_logits(z, 4), [1, 2, 3, 4], m).data
    assert a.tobytes() == b.tobytes()


def test_batched_hidden_states_match_single():
    store = lm_store()
    rng = np.random.default_rng(4)
    a = SequenceInput(np.array([BOS, 20, 21, 22]), Tensor(rng.standard_normal((2, 16))), 1)
    b = SequenceInput(np.array([BOS, 25]), None, 0)
    both = hidden_states([a, b], store, CFG).data
    np.testing.assert_allclose(both[0, : len(a)], hidden_states([a], store, CFG).data[0], atol=1e-12)
    np.testing.assert_allclose(both[1, : len(b)], hidden_states([b], store, CFG).data[0], atol=1e-12)


def _vocab():
    return build_vocab(["what is shown ? red square hum"], 40)


def test_generate_one_token_is_argmax():
    store, v = lm_store(np.float32), _vocab()
    from avllm.instruction import render_prompt

    ids, slot, _ = render_prompt("what is shown ?", v)
    logits = head(hidden_states([SequenceInput(ids, None, slot)], store, CFG)[0, len(ids) - 1], store).data.copy()
    logits[len(v):] = -np.inf
    logits[0] = -np.inf
    want = int(np.argmax(logits))
    got = generate(None, "what is shown ?", store, v, CFG, 1)
    assert got == ("" if want < 16 else v.itos[want])


def test_generate_deterministic():
    store, v = lm_store(np.float32), _vocab()
    a = generate(None, "what is shown ?", store, v, CFG, 6)
    assert a == generate(None, "what is shown ?", store, v, CFG, 6)
    s1 = generate(None, "what is shown ?", store, v, CFG, 6, mode="sample", seed=3)
    assert s1 == generate(None, "what is shown ?", store, v, CFG, 6, mode="sample", seed=3)


def test_generate_rejects_bad_args():
    store, v = lm_store(np.float32), _vocab()
    with pytest.raises(ValueError):
        generate(None, "hi", store, v, CFG, 0)
    with pytest.raises(ValueError):
        generate(None, "hi", store, v, CFG, 2, mode="beam")


def test_generate_never_emits_ids_outside_vocab():
    store, v = lm_store(np.float32, seed=9), _vocab()
    # bias the head towards an unused id; decoding must still stay inside the vocabulary
    store["lm.head.b"].data[len(v) + 3] = 100.0
    out = generate(None, "what is shown ?", store, v, CFG, 4)
    assert all(w in v for w in out.split())


def test_lm_grad_through_prefix():
    store = lm_store()
    rng = np.random.default_rng(6)
    ids = np.array([BOS, 20, 21, 22])
    tgt = np.array([20, 21, 22, 23])
    mask = np.array([False, True, True, True])

    def f(prefix):
        return lm_loss(lm_forward(prefix, ids, store, CFG, slot=1), tgt, mask)

    assert F.grad_check(f, Tensor(rng.standard_normal((2, 16)))) < 1e-6

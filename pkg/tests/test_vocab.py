import pytest
from hypothesis import given
from hypothesis import strategies as st

from avllm.vocab import BOS, EOS, NUM_RESERVED, UNK, Vocabulary, build_vocab, tokenize


def test_frequency_order():
    v = build_vocab(["a b a"], 32)
    assert v.id("a") < v.id("b")


def test_ties_broken_lexicographically():
    v = build_vocab(["zeta alpha"], 32)
    assert v.id("alpha") < v.id("zeta")


def test_empty_corpus_rejected():
    with pytest.raises(ValueError):
        build_vocab([], 32)


def test_max_size_below_reserved():
    with pytest.raises(ValueError):
        build_vocab(["a"], NUM_RESERVED - 1)


def test_round_trip():
    v = build_vocab(["what is the sound"], 64)
    assert v.decode(v.encode("what is the sound")) == "what is the sound"


def test_unknown_maps_to_unk():
    v = build_vocab(["a"], 32)
    assert v.encode("zebra") == [UNK]


def test_modality_tokens_are_single_tokens():
    assert tokenize("<AUD_VIS>\nWhat is heard?") == ["<AUD_VIS>", "What", "is", "heard", "?"]


def test_json_round_trip():
    v = build_vocab(["red square and hum ."], 64)
    assert Vocabulary.from_json(v.to_json()).itos == v.itos


def test_special_ids_skipped_on_decode():
    v = build_vocab(["hum"], 32)
    assert v.decode([BOS, v.id("hum"), EOS]) == "hum"


@given(st.lists(st.sampled_from(["red", "square", "hum", "beep", "and", ".", ","]), min_size=1, max_size=12))
def test_decode_encode_stable(words):
    v = build_vocab([" ".join(words)], 64)
    text = v.decode(v.encode(" ".join(words)))
    assert v.decode(v.encode(text)) == text

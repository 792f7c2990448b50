import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from avllm.curation.client import MockClient
from avllm.curation.toy import toy_corpus
from avllm.evaluation.judge import DIMENSIONS, JudgeError, judge_scores, parse_score
from avllm.evaluation.metrics import CaptionCorpus, MissingPredictionError, QAItem, cider, normalize, qa_top1
from avllm.evaluation.report import eval_report, evaluate

from conftest import tiny_model


# -- qa ---------------------------------------------------------------------

def test_normalize():
    assert normalize("The  Red, Square!") == "red square"
    assert normalize("an a the cat") == "cat"
    assert normalize("   ") == ""


def test_qa_examples():
    items = [
        QAItem("1", "q", ["red square"], "The red square."),
        QAItem("2", "q", ["hum"], "beep"),
        QAItem("3", "q", ["dog", "puppy"], "a puppy"),
        QAItem("4", "q", ["x"], ""),
    ]
    assert qa_top1(items) == 0.5


def test_qa_missing_prediction():
    with pytest.raises(MissingPredictionError, match="b"):
        qa_top1([QAItem("a", "q", ["x"], "x"), QAItem("b", "q", ["y"])])


@settings(max_examples=50)
@given(st.lists(st.tuples(st.sampled_from(["hum", "beep"]), st.sampled_from(["hum", "beep", "Hum."])), min_size=1, max_size=12), st.randoms())
def test_qa_permutation_invariant(pairs, rnd):
    items = [QAItem(str(i), "q", [r], p) for i, (r, p) in enumerate(pairs)]
    shuffled = items[:]
    rnd.shuffle(shuffled)
    assert qa_top1(items) == qa_top1(shuffled)


# -- cider ------------------------------------------------------------------

def cider_oracle(pairs, max_n=4):
    """Dense-vector CIDEr over an explicit n-gram vocabulary."""
    toks = [(normalize(c).split(), [normalize(r).split() for r in refs]) for c, refs in pairs]
    N = len(toks)
    total = np.zeros(N)
    for n in range(1, max_n + 1):
        grams = lambda t: [tuple(t[i : i + n]) for i in range(len(t) - n + 1)]
        vocab = sorted({g for c, refs in toks for s in [c, *refs] for g in grams(s)})
        index = {g: i for i, g in enumerate(vocab)}
        df = np.zeros(len(vocab))
        for _, refs in toks:
            present = np.zeros(len(vocab), bool)
            for r in refs:
                for g in grams(r):
                    present[index[g]] = True
            df += present
        idf = np.log(N) - np.log(np.maximum(df, 1.0))

        def vec(t):
            v = np.zeros(len(vocab))
            for g in grams(t):
                v[index[g]] += 1
            return v * idf

        for i, (c, refs) in enumerate(toks):
            vc = vec(c)
            sims = []
            for r in refs:
                vr = vec(r)
                d = np.linalg.norm(vc) * np.linalg.norm(vr)
                sims.append(0.0 if d == 0 else vc @ vr / d)
            total[i] += np.mean(sims)
    return [0.0 if not c else 10 * s / max_n for (c, _), s in zip(toks, total)]


words = st.sampled_from(["red", "square", "moves", "left", "hum", "a", "beep", "bar"])
sentence = st.lists(words, min_size=1, max_size=7).map(" ".join)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(sentence, st.lists(sentence, min_size=1, max_size=3)), min_size=2, max_size=5))
def test_cider_matches_oracle(pairs):
    got = cider(CaptionCorpus.from_pairs(pairs)).scores
    assert got == pytest.approx(cider_oracle(pairs), abs=1e-9)


def test_cider_hand_example():
    # unigram only: "x" has df 1 in a 2-item corpus, "y" appears in both references
    pairs = [("x y", ["x y"]), ("y", ["y z"])]
    s = cider(CaptionCorpus.from_pairs(pairs), max_n=1).scores
    assert s[0] == pytest.approx(10.0)
    assert s[1] == pytest.approx(0.0)


def test_cider_self_match_is_max():
    refs = ["a red square moves left", "a loud hum sound plays", "a blue bar moves right"]
    pairs = [(r, [r]) for r in refs]
    assert cider(CaptionCorpus.from_pairs(pairs)).scores == pytest.approx([10.0] * 3)
    # a 3-token caption has no 4-grams, so that order contributes nothing
    short = [("hum sound plays", ["hum sound plays"]), refs[:1] * 2]
    assert cider(CaptionCorpus.from_pairs(short)).scores[0] == pytest.approx(7.5)


def test_cider_duplicate_reference_invariance():
    base = [("a red square", ["a red square moves"]), ("a hum", ["a hum sound"])]
    dup = [("a red square", ["a red square moves"] * 3), ("a hum", ["a hum sound"])]
    assert cider(CaptionCorpus.from_pairs(base)).scores == pytest.approx(cider(CaptionCorpus.from_pairs(dup)).scores)


def test_cider_empty_candidate_warns():
    with pytest.warns(UserWarning):
        s = cider(CaptionCorpus.from_pairs([("", ["a b"]), ("a b", ["a b"])])).scores
    assert s[0] == 0.0


def test_cider_needs_two_items():
    with pytest.raises(ValueError):
        CaptionCorpus.from_pairs([("a", ["a"])])


# -- judge ------------------------------------------------------------------

class Seq:
    def __init__(self, replies):
        self.replies = itertools.cycle(replies)

    def complete(self, prompt, max_tokens):
        return next(self.replies)


def test_parse_score():
    assert [parse_score(s) for s in ["3", " 5 ", "Score: 4", "2/5", "4.", "banana", "6", "3 stars"]] == [3, 5, 4, 2, 4, None, None, None]


def test_judge_constant():
    rep = judge_scores(Seq(["3"]), [("q", "r", "p")] * 4)
    assert rep.means == {d: 3.0 for d in DIMENSIONS} and rep.count == 4


def test_judge_alternating_mean():
    rep = judge_scores(Seq(["1", "5"]), [("q", "r", "p")] * 2, dimensions=["correct"])
    assert rep.means == {"correct": 3.0}


def test_judge_excludes_unparseable():
    replies = ["banana"] + ["4"] * 19
    rep = judge_scores(Seq(replies), [("q", "r", "p")] * 20, dimensions=["detail"])
    assert rep.means == {"detail": 4.0} and rep.excluded == {"detail": 1}


def test_judge_too_many_unparseable():
    with pytest.raises(JudgeError):
        judge_scores(Seq(["banana", "3"]), [("q", "r", "p")] * 10, dimensions=["detail"])


def test_judge_with_mock_client():
    rep = judge_scores(MockClient(), [("q", "red square", "Red square."), ("q", "hum", "beep")], dimensions=["correct"])
    assert rep.means == {"correct": 3.0}


# -- report -----------------------------------------------------------------

def test_eval_report_layout(tmp_path):
    recs = toy_corpus(1, "conversation", 0) + toy_corpus(1, "caption", 0, prefix="cap")
    model = tiny_model(records=recs)
    rep = eval_report(model, recs, ["qa_top1", "cider"], tmp_path / "r.json", seed=4)
    assert set(rep) == {"config_hash", "seed", "metrics", "items"} and rep["seed"] == 4
    assert 0.0 <= rep["metrics"]["qa_top1"] <= 1.0 and rep["metrics"]["cider"] >= 0.0
    assert set(rep["metrics"]["qa_top1_by_modality"]) == {"VIS", "AUD", "AUD_VIS"}
    assert (tmp_path / "r.json").exists()


def test_evaluate_rejects_unknown_metric():
    recs = toy_corpus(1, "conversation", 0)
    with pytest.raises(ValueError):
        evaluate(tiny_model(records=recs), recs, ["bleu"])


def test_evaluate_is_deterministic():
    recs = toy_corpus(1, "conversation", 0)
    a = evaluate(tiny_model(records=recs), recs, ["qa_top1"], max_new=4)
    b = evaluate(tiny_model(records=recs), recs, ["qa_top1"], max_new=4)
    assert a == b

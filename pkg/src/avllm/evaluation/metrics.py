"""Exact-match QA accuracy and CIDEr."""

from __future__ import annotations

import math
import re
import string
import warnings
from collections import Counter
from dataclasses import dataclass, field

_PUNCT = re.compile(f"[{re.escape(string.punctuation)}]")
_WS = re.compile(r"\s+")
_ARTICLE = re.compile(r"^(?:(?:a|an|the)\s+)+")


def normalize(text: str) -> str:
    """Lowercase, drop punctuation, collapse whitespace, strip leading articles."""
    t = _PUNCT.sub(" ", text.lower())
    t = _WS.sub(" ", t).strip()
    return _ARTICLE.sub("", t)


class MissingPredictionError(ValueError):
    pass


@dataclass
class QAItem:
    id: str
    question: str
    references: list[str]
    prediction: str | None = None

    def __post_init__(self) -> None:
        if not self.references:
            raise ValueError(f"QA item {self.id!r} has no references")

    @property
    def correct(self) -> bool:
        p = normalize(self.prediction or "")
        return any(p == normalize(r) for r in self.references)


def qa_top1(items: list[QAItem]) -> float:
    if not items:
        raise ValueError("qa_top1 needs at least one item")
    missing = [it.id for it in items if it.prediction is None]
    if missing:
        raise MissingPredictionError(f"items without predictions: {missing}")
    return sum(it.correct for it in items) / len(items)


@dataclass
class CaptionItem:
    candidate: str
    references: list[str]

    def __post_init__(self) -> None:
        if not self.references:
            raise ValueError("caption item needs at least one reference")


@dataclass
class CaptionCorpus:
    items: list[CaptionItem] = field(default_factory=list)

    def __post_init__(self) -> None:
        if len(self.items) < 2:
            raise ValueError(f"CIDEr needs a corpus of at least 2 items, got {len(self.items)}")

    @classmethod
    def from_pairs(cls, pairs: list[tuple[str, list[str]]]) -> "CaptionCorpus":
        return cls([CaptionItem(c, list(r)) for c, r in pairs])


@dataclass
class CiderResult:
    scores: list[float]

    @property
    def mean(self) -> float:
        return sum(self.scores) / len(self.scores)


def ngrams(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def _vector(counts: Counter, idf: dict, default_idf: float) -> dict:
    return {g: c * idf.get(g, default_idf) for g, c in counts.items()}


def _cos(a: dict, b: dict) -> float:
    na = math.sqrt(sum(v * v for v in a.values()))
    nb = math.sqrt(sum(v * v for v in b.values()))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return sum(v * b.get(g, 0.0) for g, v in a.items()) / (na * nb)


def cider(corpus: CaptionCorpus, max_n: int = 4) -> CiderResult:
    """Plain CIDEr (no clipping, no length penalty), scaled by 10."""
    if max_n < 1:
        raise ValueError("max_n must be >= 1")
    toks = [(normalize(it.candidate).split(), [normalize(r).split() for r in it.references]) for it in corpus.items]
    N = len(toks)
    per_item = [0.0] * N
    for n in range(1, max_n + 1):
        df: Counter = Counter()
        for _, refs in toks:
            df.update(set().union(*(ngrams(r, n).keys() for r in refs)))
        idf = {g: math.log(N) - math.log(max(1.0, d)) for g, d in df.items()}
        default = math.log(N)
        for i, (cand, refs) in enumerate(toks):
            c = _vector(ngrams(cand, n), idf, default)
            per_item[i] += sum(_cos(c, _vector(ngrams(r, n), idf, default)) for r in refs) / len(refs)
    scores = []
    for i, (cand, _) in enumerate(toks):
        if not cand:
            warnings.warn(f"caption item {i} has an empty candidate; scored 0", stacklevel=2)
            scores.append(0.0)
        else:
            scores.append(10.0 * per_item[i] / max_n)
    return CiderResult(scores)

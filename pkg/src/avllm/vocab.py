"""Word-level vocabulary with reserved structural ids."""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable

PAD, BOS, EOS, UNK, HUMAN, ASSISTANT, VIS, AUD, AUD_VIS = range(9)
NUM_RESERVED = 16

RESERVED_TOKENS = ["<pad>", "<bos>", "<eos>", "<unk>", "HUMAN:", "ASSISTANT:", "<VIS>", "<AUD>", "<AUD_VIS>"]
RESERVED_TOKENS += [f"<reserved{i}>" for i in range(len(RESERVED_TOKENS), NUM_RESERVED)]

_TOKEN_RE = re.compile(r"<AUD_VIS>|<AUD>|<VIS>|\w+(?:'\w+)*|[^\w\s]")
_NO_SPACE_BEFORE = re.compile(r" ([.,!?;:%)\]}])")
_NO_SPACE_AFTER = re.compile(r"([(\[{]) ")


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text)


def detokenize(tokens: Iterable[str]) -> str:
    s = " ".join(tokens)
    s = _NO_SPACE_BEFORE.sub(r"\1", s)
    return _NO_SPACE_AFTER.sub(r"\1", s)


@dataclass
class Vocabulary:
    itos: list[str]
    stoi: dict[str, int] = field(init=False)

    def __post_init__(self) -> None:
        if self.itos[:NUM_RESERVED] != RESERVED_TOKENS:
            raise ValueError("vocabulary must start with the reserved tokens")
        self.stoi = {w: i for i, w in enumerate(self.itos)}
        if len(self.stoi) != len(self.itos):
            raise ValueError("vocabulary entries must be unique")

    def __len__(self) -> int:
        return len(self.itos)

    def __contains__(self, word: str) -> bool:
        return word in self.stoi

    def id(self, word: str) -> int:
        return self.stoi.get(word, UNK)

    def encode(self, text: str) -> list[int]:
        return [self.id(w) for w in tokenize(text)]

    def decode(self, ids: Iterable[int], skip_special: bool = True) -> str:
        words = []
        for i in ids:
            i = int(i)
            if skip_special and i < NUM_RESERVED:
                continue
            words.append(self.itos[i])
        return detokenize(words)

    def to_json(self) -> list[str]:
        return list(self.itos)

    @classmethod
    def from_json(cls, words: list[str]) -> "Vocabulary":
        return cls(list(words))


def build_vocab(corpus: list[str], max_size: int) -> Vocabulary:
    """Frequency-ordered vocabulary, ties broken lexicographically."""
    if max_size < NUM_RESERVED:
        raise ValueError(f"max_size={max_size} is smaller than the {NUM_RESERVED} reserved ids")
    if not corpus:
        raise ValueError("cannot build a vocabulary from an empty corpus")
    counts = Counter(w for text in corpus for w in tokenize(text) if w not in RESERVED_TOKENS)
    words = sorted(counts, key=lambda w: (-counts[w], w))[: max_size - NUM_RESERVED]
    return Vocabulary(RESERVED_TOKENS + words)

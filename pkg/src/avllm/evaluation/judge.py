"""Five-dimension 1-5 scoring through a pluggable generation client."""

from __future__ import annotations

import re
from dataclasses import dataclass, field

DIMENSIONS = ("correct", "detail", "context", "temporal", "consistency")

_DESCRIPTIONS = {
    "correct": "factual correctness with respect to the reference",
    "detail": "how completely the answer covers the details in the reference",
    "context": "whether the answer fits the content of the clip",
    "temporal": "whether the order of events is right",
    "consistency": "whether the answer would stay the same under a rephrased question",
}

JUDGE_TEMPLATE = (
    "You grade answers about short audio-visual clips.\n"
    "Criterion: {dimension} ({description}).\n"
    "Question: {question}\n"
    "Reference answer: {reference}\n"
    "Predicted answer: {prediction}\n"
    "Reply with a single integer from 1 (poor) to 5 (excellent) and nothing else."
)

_SCORE = re.compile(r"^\s*(?:score\s*[:=]?\s*)?([1-5])(?:\s*/\s*5)?\s*\.?\s*$", re.IGNORECASE)


class JudgeError(RuntimeError):
    pass


def judge_prompt(dimension: str, question: str, reference: str, prediction: str) -> str:
    return JUDGE_TEMPLATE.format(
        dimension=dimension, description=_DESCRIPTIONS[dimension], question=question, reference=reference, prediction=prediction
    )


def parse_score(text: str) -> int | None:
    m = _SCORE.match(text)
    return int(m.group(1)) if m else None


@dataclass
class JudgeReport:
    means: dict[str, float]
    count: int
    excluded: dict[str, int] = field(default_factory=dict)

    @property
    def total_excluded(self) -> int:
        return sum(self.excluded.values())


def judge_scores(client, items: list[tuple[str, str, str]], dimensions=DIMENSIONS, max_unparseable: float = 0.1, max_tokens: int = 8) -> JudgeReport:
    """Mean 1-5 score per dimension; unparseable replies are excluded and counted."""
    dimensions = tuple(dimensions)
    unknown = [d for d in dimensions if d not in _DESCRIPTIONS]
    if unknown:
        raise ValueError(f"unknown judge dimensions {unknown}; known: {list(DIMENSIONS)}")
    if not items or not dimensions:
        raise ValueError("judge_scores needs items and dimensions")
    scores = {d: [] for d in dimensions}
    excluded = {d: 0 for d in dimensions}
    for q, ref, pred in items:
        for d in dimensions:
            s = parse_score(client.complete(judge_prompt(d, q, ref, pred), max_tokens))
            if s is None:
                excluded[d] += 1
            else:
                scores[d].append(s)
    total = len(items) * len(dimensions)
    bad = sum(excluded.values())
    if bad > max_unparseable * total:
        raise JudgeError(f"{bad} of {total} judge replies were unparseable (limit {max_unparseable:.0%})")
    means = {}
    for d in dimensions:
        if not scores[d]:
            raise JudgeError(f"no parseable scores for dimension {d!r}")
        means[d] = sum(scores[d]) / len(scores[d])
    return JudgeReport(means, len(items), excluded)

"""Greedy predictions over a dataset and the JSON evaluation report."""

from __future__ import annotations

import json
from pathlib import Path

from ..instruction import InstructionRecord
from ..lm import generate
from ..numerics import no_grad
from ..training.routing import build_prefix
from .judge import judge_scores
from .metrics import CaptionCorpus, QAItem, cider, qa_top1

KNOWN_METRICS = ("qa_top1", "cider", "judge")


def predict(model, record: InstructionRecord, max_new: int | None = None, encoder_cache: dict | None = None) -> str:
    """Greedy answer to the record's first human turn."""
    frames, audio = model.media_for(record)
    with no_grad():
        prefix, _ = build_prefix(model, record, frames, audio, encoder_cache)
    n = model.cfg.max_new_tokens if max_new is None else max_new
    return generate(prefix, record.turns[0].text, model.store, model.vocab, model.cfg.model, n, system_prompt=model.system_prompt)


def evaluate(model, records: list[InstructionRecord], metrics, judge_client=None, max_new: int | None = None, encoder_cache: dict | None = None) -> dict:
    """Per-metric values plus per-item predictions."""
    metrics = list(metrics)
    if not metrics:
        raise ValueError("no metrics requested")
    unknown = [m for m in metrics if m not in KNOWN_METRICS]
    if unknown:
        raise ValueError(f"unknown metrics {unknown}; known: {list(KNOWN_METRICS)}")
    if "judge" in metrics and judge_client is None:
        raise ValueError("the judge metric needs a generation client")
    items = []
    for r in records:
        pred = predict(model, r, max_new, encoder_cache)
        items.append({
            "id": r.id, "task": r.task, "modality": r.modality.value,
            "question": r.question, "references": [r.answer], "prediction": pred,
        })
    values: dict = {}
    qa = [it for it in items if it["task"] != "caption"]
    caps = [it for it in items if it["task"] == "caption"]
    if "qa_top1" in metrics:
        if not qa:
            raise ValueError("qa_top1 requested but the dataset has no question records")
        qitems = [QAItem(it["id"], it["question"], it["references"], it["prediction"]) for it in qa]
        values["qa_top1"] = qa_top1(qitems)
        for it, q in zip(qa, qitems):
            it["correct"] = q.correct
        by_mod = {}
        for m in sorted({it["modality"] for it in qa}):
            sub = [q for it, q in zip(qa, qitems) if it["modality"] == m]
            by_mod[m] = qa_top1(sub)
        values["qa_top1_by_modality"] = by_mod
    if "cider" in metrics:
        if len(caps) < 2:
            raise ValueError(f"cider needs at least 2 caption records, dataset has {len(caps)}")
        res = cider(CaptionCorpus.from_pairs([(it["prediction"], it["references"]) for it in caps]))
        values["cider"] = res.mean
        for it, s in zip(caps, res.scores):
            it["cider"] = s
    if "judge" in metrics:
        rep = judge_scores(judge_client, [(it["question"], it["references"][0], it["prediction"]) for it in items])
        values["judge"] = {"means": rep.means, "count": rep.count, "excluded": rep.excluded}
    return {"metrics": values, "items": items}


def eval_report(model, records, metrics, path: str | Path | None = None, seed: int | None = None, judge_client=None) -> dict:
    out = evaluate(model, records, metrics, judge_client)
    report = {
        "config_hash": model.cfg.config_hash(),
        "seed": model.seed if seed is None else seed,
        "metrics": out["metrics"],
        "items": out["items"],
    }
    if path is not None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(json.dumps(report, indent=2, sort_keys=True))
    return report

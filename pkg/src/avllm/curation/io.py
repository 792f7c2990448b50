"""JSONL persistence for instruction records."""

from __future__ import annotations

import json
from pathlib import Path

from ..instruction import InstructionRecord, validate_record

REQUIRED = ("id", "task", "modality", "media", "turns")


class DatasetError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        super().__init__(f"line {line}: {message}" if line is not None else message)
        self.line = line


def write_dataset(records: list[InstructionRecord], path: str | Path) -> Path:
    path = Path(path)
    seen: set[str] = set()
    for r in records:
        v = validate_record(r)
        if v:
            raise DatasetError(f"record {r.id!r} is invalid: {'; '.join(v)}")
        if r.id in seen:
            raise DatasetError(f"duplicate id {r.id!r}")
        seen.add(r.id)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as f:
        for r in records:
            f.write(json.dumps(r.to_dict(), ensure_ascii=False, sort_keys=True) + "\n")
    return path


def read_dataset(path: str | Path) -> list[InstructionRecord]:
    out: list[InstructionRecord] = []
    seen: dict[str, int] = {}
    with Path(path).open(encoding="utf-8") as f:
        for n, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                doc = json.loads(line)
            except json.JSONDecodeError as e:
                raise DatasetError(f"malformed JSON ({e.msg})", n) from None
            if not isinstance(doc, dict):
                raise DatasetError("expected a JSON object", n)
            missing = [k for k in REQUIRED if k not in doc]
            if missing:
                raise DatasetError(f"missing fields {missing}", n)
            try:
                rec = InstructionRecord.from_dict(doc)
            except (KeyError, TypeError, ValueError, AttributeError) as e:
                raise DatasetError(f"schema error: {e}", n) from None
            v = validate_record(rec)
            if v:
                raise DatasetError("; ".join(v), n)
            if rec.id in seen:
                raise DatasetError(f"duplicate id {rec.id!r} (first seen on line {seen[rec.id]})", n)
            seen[rec.id] = n
            out.append(rec)
    return out

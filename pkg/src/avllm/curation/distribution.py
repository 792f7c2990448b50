"""Target task x modality counts for a curated corpus."""

from __future__ import annotations

from dataclasses import dataclass, field

from ..modality import Modality

# thousands of records per (task, modality); "caption" is the detailed-description row
TABLE: dict[str, dict[Modality, int]] = {
    "conversation": {Modality.AUD: 20, Modality.VIS: 60, Modality.AUD_VIS: 40},
    "caption": {Modality.AUD: 20, Modality.VIS: 50, Modality.AUD_VIS: 30},
    "reasoning": {Modality.AUD: 5, Modality.VIS: 20, Modality.AUD_VIS: 15},
}
MIN_TOTAL = 26


class DistributionError(ValueError):
    pass


@dataclass
class DistributionManifest:
    targets: dict[tuple[str, Modality], int]
    achieved: dict[tuple[str, Modality], int] = field(default_factory=dict)

    @property
    def total(self) -> int:
        return sum(self.targets.values())

    def task_totals(self, which: str = "targets") -> dict[str, int]:
        src = getattr(self, which)
        out: dict[str, int] = {}
        for (task, _), n in src.items():
            out[task] = out.get(task, 0) + n
        return out

    def record(self, task: str, modality: Modality) -> None:
        key = (task, modality)
        if key not in self.targets:
            raise DistributionError(f"no target for cell {task}/{modality.value}")
        if self.achieved.get(key, 0) >= self.targets[key]:
            raise DistributionError(f"cell {task}/{modality.value} already at target {self.targets[key]}")
        self.achieved[key] = self.achieved.get(key, 0) + 1

    def shortfalls(self) -> dict[tuple[str, Modality], int]:
        return {k: t - self.achieved.get(k, 0) for k, t in self.targets.items() if self.achieved.get(k, 0) < t}

    def to_dict(self) -> dict:
        cells = []
        for (task, m), t in self.targets.items():
            cells.append({"task": task, "modality": m.value, "target": t, "achieved": self.achieved.get((task, m), 0)})
        return {"total": self.total, "cells": cells, "shortfall": sum(self.shortfalls().values())}


def plan_distribution(total: int) -> DistributionManifest:
    """Scale the table to ``total`` with largest-remainder rounding (ties go to table order)."""
    if total < MIN_TOTAL:
        raise DistributionError(f"total must be at least {MIN_TOTAL}, got {total}")
    cells = [(t, m, w) for t, row in TABLE.items() for m, w in row.items()]
    weight_sum = sum(w for *_, w in cells)
    # integer arithmetic for floors and remainders keeps ties exact
    base = [total * w // weight_sum for *_, w in cells]
    rem_num = [total * w % weight_sum for *_, w in cells]
    left = total - sum(base)
    order = sorted(range(len(cells)), key=lambda i: (-rem_num[i], i))
    for i in order[:left]:
        base[i] += 1
    return DistributionManifest({(t, m): n for (t, m, _), n in zip(cells, base)})

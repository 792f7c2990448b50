"""End-to-end curation over synthetic media."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from ..config import RunConfig
from ..instruction import InstructionRecord, MediaRef
from ..modality import Modality
from .context import build_context
from .distribution import DistributionManifest, plan_distribution
from .generate import RecordRejected, ResponseParseError, generate_record
from .prompts import PromptTemplate, assemble_prompt, default_templates
from .synthetic import AUDIO_CLASSES, VISUAL_CLASSES, SyntheticSpec, synthesize_media


@dataclass
class Job:
    record_id: str
    task: str
    modality: Modality
    spec: SyntheticSpec


@dataclass
class CurationResult:
    records: list[InstructionRecord]
    manifest: DistributionManifest
    failures: dict[str, str]


def plan_jobs(manifest: DistributionManifest, seed: int) -> list[Job]:
    rng = np.random.default_rng([seed, 11])
    vis_names = sorted(VISUAL_CLASSES)
    jobs = []
    for (task, m), n in manifest.targets.items():
        for i in range(n):
            vis = vis_names[int(rng.integers(len(vis_names)))] if m.visual else None
            aud = AUDIO_CLASSES[int(rng.integers(len(AUDIO_CLASSES)))] if m.audio else None
            jobs.append(Job(f"{task}-{m.value}-{i:06d}", task, m, SyntheticSpec(vis, aud, int(rng.integers(2**31)))))
    return jobs


def curate_one(job: Job, client, cfg: RunConfig, templates: dict[tuple[str, Modality], PromptTemplate]) -> InstructionRecord:
    """Generate with up to ``max_rejections`` retries, feeding the reason back into the prompt."""
    _, _, caps = synthesize_media(job.spec, cfg.media)
    ctx = build_context(caps["frames"] or None, caps["audio"] or None)
    prompt = assemble_prompt(templates[(job.task, job.modality)], ctx)
    media = MediaRef(synthetic_spec=job.spec.to_dict())
    attempt_prompt = prompt
    last: Exception | None = None
    for _ in range(cfg.client.max_rejections + 1):
        try:
            return generate_record(client, attempt_prompt, job.task, job.modality, media, job.record_id, cfg.client.max_tokens)
        except (ResponseParseError, RecordRejected) as e:
            last = e
            attempt_prompt = f"{prompt}\n\nYOUR PREVIOUS REPLY WAS REJECTED: {e}. Follow the format exactly."
    raise RecordRejected([f"{job.record_id}: gave up after {cfg.client.max_rejections + 1} attempts ({last})"])


def curate(cfg: RunConfig, client, total: int, seed: int, templates=None) -> CurationResult:
    manifest = plan_distribution(total)
    templates = templates or default_templates()
    jobs = plan_jobs(manifest, seed)

    def run(job: Job):
        try:
            return job, curate_one(job, client, cfg, templates), None
        except (RecordRejected, ResponseParseError) as e:
            return job, None, str(e)

    with ThreadPoolExecutor(max_workers=max(1, cfg.client.parallelism)) as pool:
        results = list(pool.map(run, jobs))
    records, failures = [], {}
    for job, rec, err in results:
        if rec is None:
            failures[job.record_id] = err
            continue
        manifest.record(job.task, job.modality)
        records.append(rec)
    records.sort(key=lambda r: r.id)
    return CurationResult(records, manifest, failures)

"""Command-line entry point: curate, pretrain, finetune, eval, generate, ablate."""

from __future__ import annotations

import argparse
import json
import platform
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, load_config, validate
from .curation.client import TransportError, make_client
from .curation.distribution import DistributionError
from .curation.io import DatasetError, read_dataset, write_dataset
from .curation.pipeline import curate
from .evaluation.report import eval_report, evaluate, predict
from .instruction import InstructionRecord, MediaRef, Turn
from .modality import Modality
from .model import AVLLM
from .training.checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .training.stages import SCHEDULES, SchedulePlan, StageConfig, stages_from_config
from .training.trainer import EmptyDatasetError, MetricsLog, StageTrainer, load_params, run_schedule
from .vocab import Vocabulary, build_vocab

EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, EXIT_RUNTIME = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _paths(out: Path) -> dict[str, Path]:
    return {
        "dataset": out / "dataset.jsonl",
        "distribution": out / "distribution.json",
        "pretrain": out / "pretrain.ckpt",
        "sft": out / "sft.ckpt",
        "metrics": out / "metrics.jsonl",
        "report": out / "eval_report.json",
        "ablation": out / "ablation.json",
    }


def write_manifest(out: Path, command: str, cfg: RunConfig, outputs: list[Path]) -> Path:
    """Written once before work starts; completion goes to a separate summary file."""
    out.mkdir(parents=True, exist_ok=True)
    doc = {
        "command": command,
        "config_hash": cfg.config_hash(),
        "seed": cfg.seed,
        "versions": {"avllm": __version__, "numpy": np.__version__, "python": platform.python_version()},
        "start_time": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        "outputs": [str(p) for p in outputs],
    }
    path = out / f"manifest-{command}.json"
    path.write_text(json.dumps(doc, indent=2, sort_keys=True))
    return path


def write_summary(out: Path, command: str, extra: dict) -> None:
    doc = {"command": command, "end_time": time.strftime("%Y-%m-%dT%H:%M:%S%z"), **extra}
    (out / f"summary-{command}.json").write_text(json.dumps(doc, indent=2, sort_keys=True))


def _select(records: list[InstructionRecord], tasks) -> list[InstructionRecord]:
    return [r for r in records if r.task in tasks]


def _dataset(args, cfg: RunConfig, paths) -> list[InstructionRecord]:
    path = Path(args.data) if getattr(args, "data", None) else (Path(cfg.data.train_path) if cfg.data.train_path else paths["dataset"])
    if not path.exists():
        raise FileNotFoundError(f"dataset not found: {path} (run `curate` first or pass --data)")
    return read_dataset(path)


def _vocab_from(records, cfg: RunConfig) -> Vocabulary:
    corpus = [t.text for r in records for t in r.turns] + [cfg.data.system_prompt]
    return build_vocab(corpus, cfg.model.vocab_size)


def _model_from_checkpoint(path: Path, cfg: RunConfig) -> tuple[AVLLM, dict]:
    if not path.exists():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    ckpt = load_checkpoint(path)
    model = AVLLM(cfg, Vocabulary.from_json(ckpt.state["vocab"]))
    load_params(model, ckpt)
    return model, ckpt.state


def cmd_curate(args, cfg, out, paths) -> dict:
    write_manifest(out, "curate", cfg, [paths["dataset"], paths["distribution"]])
    client = make_client(cfg.client, args.mock, cfg.seed)
    res = curate(cfg, client, args.total, cfg.seed)
    write_dataset(res.records, paths["dataset"])
    paths["distribution"].write_text(json.dumps({**res.manifest.to_dict(), "failures": res.failures}, indent=2))
    totals = res.manifest.task_totals("achieved")
    print(f"wrote {len(res.records)} records to {paths['dataset']}")
    for task in ("conversation", "caption", "reasoning"):
        row = {m.value: res.manifest.achieved.get((task, m), 0) for m in (Modality.AUD, Modality.VIS, Modality.AUD_VIS)}
        print(f"  {task:<13} {totals.get(task, 0):>6}  " + " ".join(f"{k}={v}" for k, v in row.items()))
    if res.failures:
        print(f"  shortfall: {len(res.failures)} records failed generation", file=sys.stderr)
    return {"records": len(res.records), "shortfall": len(res.failures)}


def _run_stage(stage_name: str, model: AVLLM, records, cfg: RunConfig, paths, ckpt_out: Path) -> dict:
    stage = {s.name: s for s in stages_from_config(cfg)}[stage_name]
    log = MetricsLog(paths["metrics"])
    trainer = StageTrainer(model, records, stage, SchedulePlan.named(cfg.schedule), cfg.seed, cfg.mix, log, encoder_cache={})
    trainer.run()
    save_checkpoint(trainer.checkpoint(), ckpt_out)
    last = log.records[-1]
    print(f"{stage_name}: {trainer.total} steps, final loss {last['loss']:.4f}, checkpoint {ckpt_out}")
    return {"steps": trainer.total, "final_loss": last["loss"], "checkpoint": str(ckpt_out)}


def cmd_pretrain(args, cfg, out, paths) -> dict:
    ckpt_out = Path(args.checkpoint) if args.checkpoint else paths["pretrain"]
    write_manifest(out, "pretrain", cfg, [ckpt_out, paths["metrics"]])
    records = _dataset(args, cfg, paths)
    model = AVLLM(cfg, _vocab_from(records, cfg))
    return _run_stage("pretrain", model, _select(records, cfg.data.pretrain_tasks), cfg, paths, ckpt_out)


def cmd_finetune(args, cfg, out, paths) -> dict:
    ckpt_in = Path(args.checkpoint) if args.checkpoint else paths["pretrain"]
    write_manifest(out, "finetune", cfg, [paths["sft"], paths["metrics"]])
    model, _ = _model_from_checkpoint(ckpt_in, cfg)
    records = _dataset(args, cfg, paths)
    return _run_stage("sft", model, _select(records, cfg.data.sft_tasks), cfg, paths, paths["sft"])


def cmd_eval(args, cfg, out, paths) -> dict:
    ckpt_in = Path(args.checkpoint) if args.checkpoint else paths["sft"]
    write_manifest(out, "eval", cfg, [paths["report"]])
    model, _ = _model_from_checkpoint(ckpt_in, cfg)
    if args.data:
        records = read_dataset(args.data)
    elif cfg.data.eval_path:
        records = read_dataset(cfg.data.eval_path)
    else:
        records = _dataset(args, cfg, paths)
    judge = make_client(cfg.client, args.mock, cfg.seed) if "judge" in cfg.metrics else None
    rep = eval_report(model, records, cfg.metrics, paths["report"], cfg.seed, judge)
    for k, v in rep["metrics"].items():
        print(f"{k}: {json.dumps(v, sort_keys=True)}")
    return {"metrics": rep["metrics"], "report": str(paths["report"])}


def cmd_generate(args, cfg, out, paths) -> dict:
    ckpt_in = Path(args.checkpoint) if args.checkpoint else paths["sft"]
    model, _ = _model_from_checkpoint(ckpt_in, cfg)
    modality = Modality.parse(args.modality)
    spec = json.loads(args.media_spec) if args.media_spec else None
    media = MediaRef(args.frames, args.audio, spec)
    rec = InstructionRecord("cli", "conversation", modality, media, [Turn("human", f"{modality.token}\n{args.instruction}"), Turn("assistant", "-")])

    text = predict(model, rec, args.max_new)
    print(text)
    return {"text": text}


def cmd_ablate(args, cfg, out, paths) -> dict:
    write_manifest(out, "ablate", cfg, [paths["ablation"]])
    try:
        records = _dataset(args, cfg, paths)
    except FileNotFoundError:
        records = curate(cfg, make_client(cfg.client, True, cfg.seed), args.total, cfg.seed).records
    pre, sft = _select(records, cfg.data.pretrain_tasks), _select(records, cfg.data.sft_tasks)
    vocab = _vocab_from(records, cfg)
    rows = []
    for kind in SCHEDULES:
        model = AVLLM(cfg, vocab)
        res = run_schedule(model, pre, sft, kind, stages_from_config(cfg), cfg.seed, cfg.mix)
        acc = evaluate(model, sft, ["qa_top1"])["metrics"]
        rows.append({
            "schedule": kind,
            "final_loss": res.logs[-1]["loss"],
            "qa_top1": acc["qa_top1"],
            **{f"acc_{m}": v for m, v in acc["qa_top1_by_modality"].items()},
        })
    paths["ablation"].write_text(json.dumps(rows, indent=2))
    cols = ["schedule", "final_loss", "qa_top1", "acc_VIS", "acc_AUD", "acc_AUD_VIS"]
    print(" | ".join(f"{c:>11}" for c in cols))
    for r in rows:
        print(" | ".join(f"{r.get(c, float('nan')):>11.4f}" if c != "schedule" else f"{r[c]:>11}" for c in cols))
    return {"rows": rows}


COMMANDS = {
    "curate": cmd_curate,
    "pretrain": cmd_pretrain,
    "finetune": cmd_finetune,
    "eval": cmd_eval,
    "generate": cmd_generate,
    "ablate": cmd_ablate,
}


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="avllm", description="Audio-visual instruction-following LM: data curation, two-stage training, evaluation.")
    p.add_argument("--version", action="version", version=f"avllm {__version__}")
    sub = p.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)

    def common(sp):
        sp.add_argument("--config", help="JSON run config (missing keys take defaults)")
        sp.add_argument("--seed", type=int, help="override the config seed")
        sp.add_argument("--out", default="runs/default", help="run directory (default: runs/default)")
        return sp

    c = common(sub.add_parser("curate", help="generate an instruction dataset"))
    c.add_argument("--mock", action="store_true", help="use the offline deterministic generation client")
    c.add_argument("--total", type=int, default=260, help="number of records (default 260, minimum 26)")

    for name, helptext, ckhelp in (
        ("pretrain", "stage 1: train the projectors on captions", "output checkpoint (default OUT/pretrain.ckpt)"),
        ("finetune", "stage 2: train projectors and LM on instructions", "input stage-1 checkpoint (default OUT/pretrain.ckpt)"),
    ):
        sp = common(sub.add_parser(name, help=helptext))
        sp.add_argument("--checkpoint", help=ckhelp)
        sp.add_argument("--data", help="dataset JSONL (default OUT/dataset.jsonl)")
        sp.add_argument("--schedule", choices=SCHEDULES, help="override the schedule kind")

    e = common(sub.add_parser("eval", help="score a checkpoint and write a JSON report"))
    e.add_argument("--checkpoint", help="checkpoint to evaluate (default OUT/sft.ckpt)")
    e.add_argument("--data", help="evaluation dataset JSONL")
    e.add_argument("--mock", action="store_true", help="offline judge client when the judge metric is on")

    g = common(sub.add_parser("generate", help="answer one instruction about one clip"))
    g.add_argument("--checkpoint", help="checkpoint (default OUT/sft.ckpt)")
    g.add_argument("--instruction", required=True, help="question text, without the modality token")
    g.add_argument("--modality", required=True, choices=[m.value for m in Modality])
    g.add_argument("--media-spec", help='synthetic clip as JSON, e.g. {"visual_class": "red_square", "seed": 3}')
    g.add_argument("--frames", help=".npy array of shape (T, H, W, 3)")
    g.add_argument("--audio", help=".npy array of shape (K, M)")
    g.add_argument("--max-new", type=int, default=None, help="token limit (default from config)")

    a = common(sub.add_parser("ablate", help="compare MAT, PT1 and PT2 schedules"))
    a.add_argument("--data", help="dataset JSONL (default OUT/dataset.jsonl; curated with the mock client if absent)")
    a.add_argument("--total", type=int, default=260, help="records to curate when no dataset exists")
    return p


def run_command(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("a subcommand is required")
    except UsageError as e:
        print(f"avllm: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as e:  # --help / --version
        return int(e.code or 0)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        if getattr(args, "schedule", None):
            cfg.schedule = args.schedule
        problems = validate(cfg)
        if problems:
            raise ConfigError(problems)
        out = Path(args.out)
        paths = _paths(out)
        result = COMMANDS[args.command](args, cfg, out, paths)
        if args.command != "generate":
            write_summary(out, args.command, {"result": result})
        return EXIT_OK
    except (ConfigError, DatasetError, DistributionError, EmptyDatasetError) as e:
        print(f"avllm: validation error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except FileNotFoundError as e:
        print(f"avllm: file not found: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    except (CheckpointError, TransportError, ValueError, RuntimeError, OSError) as e:
        print(f"avllm: error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as e:  # noqa: BLE001 - last-resort mapping to the runtime exit code
        print(f"avllm: unexpected {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME


def main() -> None:
    sys.exit(run_command())

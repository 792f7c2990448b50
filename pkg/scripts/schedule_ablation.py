"""MAT vs PT1 vs PT2 on the synthetic corpus under equal seeds and step budgets."""

import argparse
import json

import numpy as np

from avllm.experiments import ToyCorpora, ToyExperiment, run_toy

KINDS = ("mat", "pt1", "pt2")


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--sft-steps", type=int, default=150)
    ap.add_argument("--all-modalities", action="store_true", help="score VIS and AUD questions too")
    ap.add_argument("--out", help="write per-run results as JSON here")
    args = ap.parse_args()

    mods = ("VIS", "AUD", "AUD_VIS") if args.all_modalities else ("AUD_VIS",)
    exp = ToyExperiment(sft_steps=args.sft_steps, eval_modalities=mods)
    acc = {k: {m: [] for m in mods} for k in KINDS}
    runs = []
    for seed in range(args.seeds):
        corpora = ToyCorpora.make(exp, seed)
        for kind in KINDS:
            r = run_toy(exp, kind, seed, corpora)
            for m in mods:
                acc[kind][m].append(r.accuracy[m])
            runs.append({"seed": seed, "schedule": kind, "accuracy": r.accuracy, "final_loss": r.final_loss})
            print(f"seed {seed} {kind:>3}: " + "  ".join(f"{m}={r.accuracy[m]:.3f}" for m in mods), flush=True)
    print("\nschedule " + " ".join(f"{m:>9}" for m in mods))
    for kind in KINDS:
        print(f"{kind:>8} " + " ".join(f"{np.mean(acc[kind][m]):>9.3f}" for m in mods))
    if args.out:
        with open(args.out, "w") as f:
            json.dump(runs, f, indent=2)


if __name__ == "__main__":
    main()

"""Train one schedule on the synthetic QA corpus and print per-modality accuracy."""

import argparse
import json
from dataclasses import asdict

from avllm.experiments import ToyExperiment, run_toy


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--schedule", default="mat", choices=["mat", "pt1", "pt2"])
    ap.add_argument("--seeds", type=int, nargs="+", default=[0])
    ap.add_argument("--sft-steps", type=int, default=500)
    ap.add_argument("--pretrain-steps", type=int, default=50)
    ap.add_argument("--frames", type=int, default=8)
    ap.add_argument("--out", help="write results as JSON here")
    args = ap.parse_args()

    exp = ToyExperiment(frames=args.frames, sft_steps=args.sft_steps, pretrain_steps=args.pretrain_steps)
    rows = []
    for seed in args.seeds:
        r = run_toy(exp, args.schedule, seed)
        print(f"seed {seed}: " + "  ".join(f"{m}={a:.3f}" for m, a in sorted(r.accuracy.items())) + f"  loss={r.final_loss:.4f}  {r.seconds:.0f}s")
        rows.append(asdict(r))
    if args.out:
        with open(args.out, "w") as f:
            json.dump({"experiment": asdict(exp), "runs": rows}, f, indent=2)


if __name__ == "__main__":
    main()

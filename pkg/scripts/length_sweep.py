"""Sweep frame count T and audio segment count K; report prefix length and accuracy."""

import argparse

from avllm.experiments import ToyExperiment, sweep_lengths


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--frames", type=int, nargs="+", default=[4, 8, 16, 32])
    ap.add_argument("--segments", type=int, nargs="+", default=[1, 2, 4])
    ap.add_argument("--sft-steps", type=int, default=100)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    exp = ToyExperiment(sft_steps=args.sft_steps, train_per_modality=100, test_per_modality=30)
    print(f"{'T':>3} {'K':>2} {'prefix':>6} {'VIS':>6} {'AUD':>6} {'AUD_VIS':>7} {'secs':>5}")
    grid = [(t, k) for t in args.frames for k in args.segments]
    for (t, k), r in zip(grid, sweep_lengths(exp, args.frames, args.segments, args.seed)):
        a = r.accuracy
        print(f"{t:>3} {k:>2} {r.prefix_length:>6} {a['VIS']:>6.3f} {a['AUD']:>6.3f} {a['AUD_VIS']:>7.3f} {r.seconds:>5.0f}")


if __name__ == "__main__":
    main()

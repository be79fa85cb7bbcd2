#!/usr/bin/env python3
"""Train and evaluate the attentive system, the average-pooling ablation, and
the ask-everything/recommend-last baseline on the synthetic benchmark, then
write the comparison table and per-variant SR@T curves."""
import argparse
import logging
from pathlib import Path

from convrec.experiment import run_ablation


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("workdir", type=Path,
                    help="directory holding (or receiving) the synthetic dataset")
    ap.add_argument("--out", type=Path, default=None,
                    help="report directory (default: workdir/ablation)")
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--episodes", type=int, default=200)
    ap.add_argument("--epochs", type=int, default=80)
    ap.add_argument("--dim", type=int, default=64)
    args = ap.parse_args()

    logging.basicConfig(level=logging.INFO, format="%(levelname)s: %(message)s")
    out = args.out or (args.workdir / "ablation")
    summary = run_ablation(args.workdir, seeds=tuple(args.seeds),
                           n_eval_episodes=args.episodes, epochs=args.epochs,
                           dim=args.dim, out_dir=out)
    print(f"\n{'variant':14s} {'SR@T_max':>9s} {'AT':>6s}   SR@T curve (mean)")
    for variant, row in summary.items():
        curve = " ".join(f"{v:.2f}" for v in row["sr_at_mean"])
        print(f"{variant:14s} {row['sr_mean']:9.3f} {row['at_mean']:6.2f}   {curve}")
    print(f"\nreports in {out}")


if __name__ == "__main__":
    main()

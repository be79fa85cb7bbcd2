#!/usr/bin/env python3
"""Build a small trained artifact set (dataset, embedding, policy, config)
suitable for `convrec serve` / `convrec chat` demos and the web client's
round-trip test. Runs in well under a minute."""
import argparse
import logging
from pathlib import Path

from convrec.cli import main as cli_main
from convrec.experiment import generate_synthetic_dataset, synthetic_config


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("out", type=Path, help="artifact directory to create")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--epochs", type=int, default=40)
    ap.add_argument("--policy-episodes", type=int, default=600)
    args = ap.parse_args()

    logging.basicConfig(level=logging.INFO, format="%(levelname)s: %(message)s")
    args.out.mkdir(parents=True, exist_ok=True)
    generate_synthetic_dataset(args.out, n_items=120, n_users=40,
                               pos_per_user=15, seed=args.seed)
    cfg = synthetic_config(args.out, seed=args.seed, epochs=args.epochs, dim=32)
    cfg.policy.episodes = args.policy_episodes
    cfg.score_threshold = 0.0
    cfg.out_dir = str(args.out / "out")
    cfg_path = args.out / "config.json"
    cfg.save(cfg_path)

    rc = cli_main(["train-embed", "--config", str(cfg_path)])
    rc = rc or cli_main(["train-policy", "--config", str(cfg_path),
                         "--embedding", str(args.out / "out" / "embedding.npz")])
    if rc:
        raise SystemExit(rc)
    print(f"artifacts ready under {args.out}/out; serve with:\n"
          f"  convrec serve --config {cfg_path} "
          f"--embedding {args.out}/out/embedding.npz "
          f"--policy {args.out}/out/policy.npz")


if __name__ == "__main__":
    main()

"""Command-line entry point: train / evaluate / sweep / fedavg-demo."""

from __future__ import annotations

import argparse
import sys

from .harness import (load_config, run_evaluate, run_fedavg_demo, run_sweep,
                      run_train)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="feelsim",
        description="Battery-constrained federated edge learning simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", default=None, help="JSON config overlay")
        p.add_argument("--preset", choices=("paper", "desk"), default="paper")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default="runs/out", help="output directory")
        p.add_argument("--parallel", type=int, default=1,
                       help="worker processes for sweep points")

    p_train = sub.add_parser("train", help="train the DDPG allocator")
    common(p_train)
    p_train.add_argument("--quiet", action="store_true")

    p_eval = sub.add_parser("evaluate", help="noise-free rollouts of a checkpoint")
    common(p_eval)
    p_eval.add_argument("--checkpoint", required=True)

    p_sweep = sub.add_parser("sweep", help="evaluate strategies along one axis")
    common(p_sweep)
    p_sweep.add_argument("--axis", choices=("static_factor", "num_users",
                                            "total_bandwidth"), default=None)

    p_fed = sub.add_parser("fedavg-demo", help="convex federated averaging demo")
    common(p_fed)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {}
    if getattr(args, "axis", None):
        overrides = {"run": {"sweep_axis": args.axis}}
    cfg = load_config(preset=args.preset, config_path=args.config,
                      seed=args.seed, overrides=overrides)

    if args.command == "train":
        record = run_train(cfg, args.out, progress=not args.quiet)
    elif args.command == "evaluate":
        record = run_evaluate(cfg, args.out, args.checkpoint)
    elif args.command == "sweep":
        record = run_sweep(cfg, args.out, parallel=args.parallel)
    else:
        record = run_fedavg_demo(cfg, args.out)

    print(f"{record.kind}: wrote {len(record.rows)} rows "
          f"(config={record.config_hash} seed={record.seed})")
    for name, path in record.outputs.items():
        print(f"  {name}: {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry points.

    replaylab train --config cfg.json [--metric M --beta B --rho R
                     --prioritization P --seed N --baseline]
    replaylab eval --checkpoint params.bin [--episodes N --max-tier T --seed N]
    replaylab sweep --grid grid.json
    replaylab compare runs/a runs/b
    replaylab plot runs/a/seed_0/metrics.jsonl [--out DIR]

Configs are JSON files mirroring ExperimentConfig; sweep grids are JSON with
a base config path plus the beta/rho lists to cross.
"""

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from replaylab.harness import (
    ExperimentConfig,
    compare_runs,
    evaluate_policy,
    read_metrics,
    run_training,
)
from replaylab.learner import load_params
from replaylab.plots import emit_plots

DEFAULT_SWEEP_BETAS = (0.1, 0.5, 1.0, 1.4, 2.0)
DEFAULT_SWEEP_RHOS = (0.1, 0.3, 1.0)


def _load_config(path, args) -> ExperimentConfig:
    config = ExperimentConfig.from_file(path)
    overrides = {}
    for name in ("metric", "beta", "rho", "prioritization"):
        value = getattr(args, name, None)
        if value is not None:
            overrides[name] = value
    if overrides:
        config = replace(config, replay=replace(config.replay, **overrides))
    if getattr(args, "baseline", False):
        config = replace(config, baseline=True)
    if getattr(args, "output", None):
        config = replace(config, output_dir=args.output)
    return config


def cmd_train(args) -> int:
    config = _load_config(args.config, args)
    seeds = [args.seed] if args.seed is not None else config.seeds
    for seed in seeds:
        records = run_training(config, seed)
        final = records[-1]
        print(json.dumps({"seed": seed, "final": final}, sort_keys=True))
    return 0


def cmd_eval(args) -> int:
    params = load_params(args.checkpoint)
    rng = np.random.default_rng(args.seed)
    lo = args.min_level

    mean, stderr = evaluate_policy(
        params, args.episodes, lambda r: int(r.integers(lo, 2**63)),
        rng, args.max_tier, greedy=args.greedy,
    )
    print(json.dumps({"episodes": args.episodes, "mean_return": mean,
                      "stderr": stderr}, sort_keys=True))
    return 0


def cmd_sweep(args) -> int:
    with open(args.grid) as fh:
        grid = json.load(fh)
    base_path = Path(args.grid).parent / grid["config"]
    config = ExperimentConfig.from_file(base_path)
    betas = grid.get("beta", list(DEFAULT_SWEEP_BETAS))
    rhos = grid.get("rho", list(DEFAULT_SWEEP_RHOS))
    root = Path(grid.get("output_dir", config.output_dir))
    for beta in betas:
        for rho in rhos:
            cell = replace(
                config,
                replay=replace(config.replay, beta=beta, rho=rho),
                output_dir=str(root / f"beta_{beta}_rho_{rho}"),
            )
            for seed in cell.seeds:
                records = run_training(cell, seed)
                print(json.dumps({
                    "beta": beta, "rho": rho, "seed": seed,
                    "final_test_return": records[-1]["test_return_mean"],
                }, sort_keys=True))
    return 0


def _dir_logs(run_dir) -> list[list[dict]]:
    subs = sorted(Path(run_dir).glob("seed_*"))
    if not subs:
        raise SystemExit(f"no seed_* directories under {run_dir}")
    return [read_metrics(sub / "metrics.jsonl") for sub in subs]


def cmd_compare(args) -> int:
    report = compare_runs(_dir_logs(args.dir_a), _dir_logs(args.dir_b))
    print(json.dumps(report, indent=2, sort_keys=True))
    return 0


def cmd_plot(args) -> int:
    records = read_metrics(args.log)
    out = args.out or Path(args.log).parent
    for path in emit_plots(records, out):
        print(path)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="replaylab")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="run training for one or more seeds")
    p.add_argument("--config", required=True)
    p.add_argument("--metric")
    p.add_argument("--beta", type=float)
    p.add_argument("--rho", type=float)
    p.add_argument("--prioritization")
    p.add_argument("--seed", type=int)
    p.add_argument("--baseline", action="store_true")
    p.add_argument("--output")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on fresh levels")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--episodes", type=int, default=100)
    p.add_argument("--max-tier", type=int, default=4)
    p.add_argument("--min-level", type=int, default=200,
                   help="lowest level id to draw from (above the training ids)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--greedy", action="store_true")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("sweep", help="train over a beta/rho grid")
    p.add_argument("--grid", required=True)
    p.set_defaults(fn=cmd_sweep)

    p = sub.add_parser("compare", help="Welch's t-test between two run directories")
    p.add_argument("dir_a")
    p.add_argument("dir_b")
    p.set_defaults(fn=cmd_compare)

    p = sub.add_parser("plot", help="render SVG charts and CSV from a metrics log")
    p.add_argument("log")
    p.add_argument("--out")
    p.set_defaults(fn=cmd_plot)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())

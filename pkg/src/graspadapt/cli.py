"""Command-line front end for pretraining, episodes, and benchmarks.

Subcommands:
    pretrain   pretrain a detector per the config's domain split, save it
    run        walk one exploration episode and print its trace
    bench      full benchmark run, writes episode CSV + aggregate report
    sweep-eps  benchmark once per grasp threshold, writes a comparison table
    eval       frozen single-view evaluation of a saved detector
    plot-data  per-family accuracy/efficiency data from an episodes CSV

Every experiment subcommand takes --config (JSON, documented schema v1);
omitting it runs the built-in defaults.  --seed replaces the config's seed
list with a single seed for quick spot checks.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

from .assessment import EmbodiedParams
from .detector import ParametricDetector
from .exploration import run_episode
from .harness import (
    BenchmarkConfig,
    config_hash,
    config_to_dict,
    evaluate_detector,
    format_aggregate,
    format_family_csv,
    format_sweep_table,
    load_config,
    pretrain_detector,
    pretrain_families,
    read_episode_csv,
    report_stem,
    run_benchmark,
    sweep_epsilon,
)
from .knowledge import init_opnet, load_pool
from .scene import build_trajectory, generate_scene


def _load_cli_config(args) -> BenchmarkConfig:
    cfg = load_config(args.config) if args.config else BenchmarkConfig()
    if getattr(args, "seed", None) is not None:
        cfg = dataclasses.replace(cfg, seeds=(args.seed,))
    return cfg


def _add_config_args(p, seed_help="replace the config's seed list"):
    p.add_argument("--config", help="JSON config file (schema version 1)")
    p.add_argument("--seed", type=int, help=seed_help)


def cmd_pretrain(args) -> int:
    cfg = _load_cli_config(args)
    trajectory = build_trajectory(V=cfg.n_viewpoints, K=cfg.n_groups)
    families = pretrain_families(cfg)
    det = pretrain_detector(cfg, trajectory)
    det.save(args.out)
    print(f"pretrained on {', '.join(families)} "
          f"({cfg.pretrain_scenes} scenes, {cfg.pretrain_epochs} epochs)")
    print(f"detector saved to {args.out}")
    return 0


def cmd_run(args) -> int:
    cfg = _load_cli_config(args)
    trajectory = build_trajectory(V=cfg.n_viewpoints, K=cfg.n_groups)
    if args.detector:
        det = ParametricDetector.load(args.detector)
    else:
        print("no --detector given, pretraining one first...")
        det = pretrain_detector(cfg, trajectory)
    if args.pool:
        pool, opnet = load_pool(args.pool)
    else:
        pool, opnet = [], init_opnet(seed=0, k=cfg.n_groups)

    seed = args.seed if args.seed is not None else cfg.seeds[0]
    scene = generate_scene({"families": {args.family: 1}}, seed=seed,
                           trajectory=trajectory)
    result = run_episode(scene, trajectory, det, pool, opnet,
                         EmbodiedParams(), epsilon=cfg.epsilon,
                         retain_threshold=cfg.retain_threshold,
                         lambda_dist=cfg.lambda_dist,
                         lambda_width=cfg.lambda_width)
    print(f"episode on {args.family} (seed {seed}), "
          f"start group {result.start_group}")
    for row in result.qa_trace:
        smax = "-" if row.max_score is None else f"{row.max_score:.2f}"
        print(f"  viewpoint {row.viewpoint:2d}: {row.n_candidates} candidates,"
              f" {row.n_passing} passing, max S {smax} -> {row.action}")
    print(f"status={result.status.value} sg={result.sg} ee={result.ee:.2f} "
          f"success={result.success}")
    return 0


def cmd_bench(args) -> int:
    cfg = _load_cli_config(args)
    report = run_benchmark(cfg, out_dir=args.out)
    sys.stdout.write(format_aggregate(report))
    if args.out:
        print(f"results under {args.out}/{report_stem(report)}_*")
    return 0


def cmd_sweep_eps(args) -> int:
    cfg = _load_cli_config(args)
    values = tuple(float(v) for v in args.values.split(","))
    reports = sweep_epsilon(cfg, values=values, out_dir=args.out)
    table = format_sweep_table(reports)
    sys.stdout.write(table)
    if args.out:
        path = os.path.join(args.out, f"sweep_{config_hash(cfg)}.csv")
        with open(path, "w") as fh:
            fh.write(table)
        print(f"sweep table written to {path}")
    return 0


def cmd_eval(args) -> int:
    cfg = _load_cli_config(args)
    det = ParametricDetector.load(args.detector)
    report = evaluate_detector(cfg, det, out_dir=args.out)
    sys.stdout.write(format_aggregate(report))
    return 0


def cmd_plot_data(args) -> int:
    rows = read_episode_csv(args.episodes)
    text = format_family_csv(rows)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
        print(f"per-family data written to {args.out}")
    else:
        sys.stdout.write(text)
    return 0


def cmd_show_config(args) -> int:
    cfg = _load_cli_config(args)
    json.dump(config_to_dict(cfg), sys.stdout, indent=2, sort_keys=True)
    print()
    print(f"# hash: {config_hash(cfg)}", file=sys.stderr)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="graspadapt",
        description="embodied test-time adaptation of grasp detection, "
                    "desk-scale benchmark")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("pretrain", help="pretrain a detector and save it")
    _add_config_args(p)
    p.add_argument("--out", required=True, help="output .npz checkpoint path")
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("run", help="walk one exploration episode")
    _add_config_args(p, seed_help="scene seed (default: config's first seed)")
    p.add_argument("--family", default="disk",
                   help="object family for the scene (default: disk)")
    p.add_argument("--detector", help=".npz checkpoint; pretrains if omitted")
    p.add_argument("--pool", help="knowledge pool .npz snapshot")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("bench", help="full benchmark run")
    _add_config_args(p)
    p.add_argument("--out", help="directory for CSV and aggregate files")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("sweep-eps",
                       help="benchmark once per grasp threshold value")
    _add_config_args(p)
    p.add_argument("--values", default="3,4,5",
                   help="comma-separated thresholds (default: 3,4,5)")
    p.add_argument("--out", help="directory for per-arm results and table")
    p.set_defaults(func=cmd_sweep_eps)

    p = sub.add_parser("eval",
                       help="frozen single-view evaluation of a detector")
    _add_config_args(p)
    p.add_argument("--detector", required=True, help=".npz checkpoint path")
    p.add_argument("--out", help="directory for CSV and aggregate files")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("plot-data",
                       help="per-family accuracy/efficiency CSV from results")
    p.add_argument("--episodes", required=True,
                   help="episodes CSV produced by bench")
    p.add_argument("--out", help="output CSV (default: stdout)")
    p.set_defaults(func=cmd_plot_data)

    p = sub.add_parser("show-config",
                       help="print the resolved config as JSON")
    _add_config_args(p)
    p.set_defaults(func=cmd_show_config)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())

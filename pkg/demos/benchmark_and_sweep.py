"""The seeded benchmark: frozen baseline vs adapted exploration.

Runs a small cross-domain suite twice to show byte-identical output, then
sweeps the grasp threshold.  Everything here is driven by one frozen
config dataclass; the CLI subcommands wrap these same calls.
"""

import tempfile
from pathlib import Path

from graspadapt.harness import (
    BenchmarkConfig,
    config_hash,
    format_aggregate,
    format_episode_csv,
    format_sweep_table,
    run_benchmark,
    sweep_epsilon,
    write_report,
)

cfg = BenchmarkConfig(families={"disk": 4}, seeds=(0, 1),
                      domain="cross_domain", mode="eta_multi")
print(f"config hash {config_hash(cfg)} "
      f"({sum(n for _, n in cfg.families)} objects x {len(cfg.seeds)} seeds)")

report = run_benchmark(cfg)
print()
print(format_aggregate(report), end="")

print("\nper-episode rows:")
print(format_episode_csv(report), end="")

again = run_benchmark(cfg)
same = format_episode_csv(report) == format_episode_csv(again)
print(f"\nrerun byte-identical: {same}")

with tempfile.TemporaryDirectory() as tmp:
    paths = write_report(report, tmp)
    names = sorted(Path(p).name for p in paths.values())
    print(f"wrote {names[0]} and {names[1]}")

# Stricter thresholds never retain more pseudo-labels on a fixed view.
sweep_cfg = BenchmarkConfig(families={"disk": 3}, seeds=(0,),
                            domain="same_domain", mode="eta_single",
                            adapt=False)
reports = sweep_epsilon(sweep_cfg, values=(3.0, 4.0, 5.0))
print("\nthreshold sweep (single view, frozen detector):")
print(format_sweep_table(reports), end="")

"""Run the five canned figure panels and print their summary tables.

    python3 scripts/reproduce_figures.py --out results --seeds 10
    python3 scripts/reproduce_figures.py --panels 2a,2d --seeds 3

Each panel writes per_round.csv, aggregate.csv and selection.csv under
OUT/<panel>/. Panels 2d and 2e share one configuration (lambda = 1), so
2e reuses the 2d run.
"""
import argparse
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from cab.cli import FIGURES, figure_config
from cab.harness import run_suite


def table(result, panel):
    config = result.config
    print(f"\n== {panel} ({config.n_seeds} seeds) ==")
    if panel in ("2d", "2e"):
        for rec in result.aggregates:
            col = rec.selection_probability if panel == "2d" else rec.last10_expected_match_sum
            print(f"{rec.policy:20s} " + " ".join(f"{v:6.2f}" for v in col))
        return
    key = "cum" if panel == "2a" else "norm"
    for rec in result.aggregates:
        sat = getattr(rec, f"{key}_satisfaction")
        mat = getattr(rec, f"{key}_matches")
        sv = "" if rec.sweep_value is None else f"{rec.sweep_param}={rec.sweep_value:<5}"
        print(f"{rec.policy:20s} {sv} satisfaction {sat[0]:10.3f} +- {sat[1]:.3f}  matches {mat[0]:10.3f} +- {mat[1]:.3f}")


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--out", default="results")
    p.add_argument("--seeds", type=int, default=10)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--panels", default=",".join(FIGURES))
    args = p.parse_args(argv)

    panels = [s.strip() for s in args.panels.split(",") if s.strip()]
    done = {}
    for panel in panels:
        source = "2d" if panel == "2e" else panel
        if source not in done:
            config = replace(
                figure_config(source), n_seeds=args.seeds, jobs=args.jobs, output_dir=Path(args.out) / source
            )
            start = time.perf_counter()
            done[source] = run_suite(config)
            print(f"[{source}] finished in {time.perf_counter() - start:.1f} s", file=sys.stderr)
        table(done[source], panel)
    if "2a" in done:
        proxy = done["2a"].regret_proxy("cab-ucb")
        print(f"\ncab-ucb regret proxy, first 100 rounds {np.mean(proxy[:, :100]):.4f}, last 100 {np.mean(proxy[:, -100:]):.4f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())

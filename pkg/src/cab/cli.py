"""Command-line entry point.

    cab run CONFIG [--seed S] [--seeds N] [--out DIR] [--set key=value ...]
    cab sweep --param {beta,lambda,K,gamma} --values 1,2,5 [--config CONFIG] ...
    cab figure {2a,2b,2c,2d,2e} [--seeds N] [--out DIR]
    cab replay --instance FILE [--policies a,b] [--out DIR]
    cab instance --out FILE [--seed S] [--set key=value ...]

Exit status: 0 on success, 1 on configuration or usage errors, 2 on
runtime failures.
"""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .config import apply_overrides, load_config, parse_values
from .env import EnvironmentInstance, generate_instance
from .errors import CabError, ConfigError, ParameterError
from .harness import SWEEP_PARAMS, ExperimentConfig, SuiteResult, aggregate_runs, run_cell, run_suite, write_outputs
from .numerics import derive_rng
from .policies import LEARNING_POLICIES

FIGURES = ("2a", "2b", "2c", "2d", "2e")
FIGURE_SEEDS = 10


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def figure_config(panel: str) -> ExperimentConfig:
    """Canned settings for each figure panel (defaults N=50, K=10, T=500, lambda=0.5, beta=5)."""
    config = ExperimentConfig(n_seeds=FIGURE_SEEDS)
    if panel == "2b":
        return replace(config, sweep=("beta", [1.0, 2.0, 5.0, 10.0, 20.0]))
    if panel == "2c":
        return replace(config, sweep=("lambda", [0.0, 0.25, 0.5, 0.75, 1.0]))
    if panel in ("2d", "2e"):
        return replace(config, env=replace(config.env, popularity=1.0))
    if panel == "2a":
        return config
    raise ConfigError(f"unknown figure panel {panel!r}")


def _parse_sets(items) -> dict[str, str]:
    pairs = {}
    for item in items or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        pairs[k.strip()] = v.strip()
    return pairs


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, help="base seed; runs use seed, seed+1, ...")
    p.add_argument("--seeds", type=int, help="number of seeds")
    p.add_argument("--out", help="output directory")
    p.add_argument("--jobs", type=int, help="parallel worker processes")
    p.add_argument("--policies", help="comma-separated policy names")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
    p.add_argument("--no-per-round", action="store_true", help="skip per_round.csv")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cab", description="Combinatorial allocation bandit experiments")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("run", help="run one config file")
    p.add_argument("config")
    _common(p)

    p = sub.add_parser("sweep", help="sweep one parameter")
    p.add_argument("--param", required=True, choices=SWEEP_PARAMS)
    p.add_argument("--values", required=True)
    p.add_argument("--config")
    _common(p)

    p = sub.add_parser("figure", help="canned configuration for one figure panel")
    p.add_argument("panel", choices=FIGURES)
    _common(p)

    p = sub.add_parser("replay", help="run policies on a saved instance")
    p.add_argument("--instance", required=True)
    _common(p)

    p = sub.add_parser("instance", help="generate and save an instance")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    return parser


def _apply_flags(config: ExperimentConfig, args) -> ExperimentConfig:
    config = apply_overrides(config, _parse_sets(args.set))
    if args.seed is not None:
        config = replace(config, env=replace(config.env, seed=args.seed))
    if args.seeds is not None:
        config = replace(config, n_seeds=args.seeds)
    if args.out is not None:
        config = replace(config, output_dir=Path(args.out))
    if args.jobs is not None:
        config = replace(config, jobs=args.jobs)
    if args.policies:
        names = [n.strip() for n in args.policies.split(",") if n.strip()]
        config = replace(config, policies={n: config.policies.get(n, {}) for n in names})
    if args.no_per_round:
        config = replace(config, emit_per_round=False)
    return config.validate()


def _replay(args) -> int:
    try:
        inst = EnvironmentInstance.load(args.instance)
    except CabError as exc:
        raise ConfigError(str(exc)) from exc
    config = ExperimentConfig(env=inst.spec, n_seeds=1)
    config = _apply_flags(config, args)
    if config.env != inst.spec:
        raise ConfigError("environment settings cannot be overridden when replaying an instance")
    seed = inst.spec.seed
    runs = {(None, seed, name): recs for name, recs in run_cell(config, None, seed, instance=inst).items()}
    config = replace(config, n_seeds=1)
    write_outputs(SuiteResult(config, runs, aggregate_runs(config, runs)), config.output_dir)
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")

    try:
        if args.command == "instance":
            config = apply_overrides(ExperimentConfig(), _parse_sets(args.set))
            spec = replace(config.env, seed=args.seed).validate()
            generate_instance(spec, derive_rng(spec.seed, "env")).save(args.out)
            return 0
        if args.command == "replay":
            return _replay(args)
        if args.command == "run":
            config = load_config(args.config)
        elif args.command == "sweep":
            config = load_config(args.config) if args.config else ExperimentConfig(policies={n: {} for n in LEARNING_POLICIES})
            config = replace(config, sweep=(args.param, parse_values(args.values)))
        else:
            config = figure_config(args.panel)
        config = _apply_flags(config, args)
    except (ConfigError, ParameterError) as exc:
        print(f"cab: configuration error: {exc}", file=sys.stderr)
        return 1

    try:
        result = run_suite(config)
    except (CabError, OSError) as exc:
        print(f"cab: run failed: {exc}", file=sys.stderr)
        return 2
    for rec in result.aggregates:
        sv = "" if rec.sweep_value is None else f" {rec.sweep_param}={rec.sweep_value}"
        print(f"{rec.policy:20s}{sv} satisfaction {rec.cum_satisfaction[0]:.1f} matches {rec.cum_matches[0]:.1f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())

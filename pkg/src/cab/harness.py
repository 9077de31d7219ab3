"""Seeded experiment runner: paired multi-policy runs, sweeps, aggregation
and CSV output.

Every (sweep value, seed) cell generates one environment instance and runs
each requested policy plus the two true-parameter references on it, so
normalization is paired. Random streams are derived from (seed, role):
``("env",)`` for the instance, ``("feedback",)`` for outcomes (each policy
gets its own copy of the same stream) and ``("policy", name)`` for the
policy's own randomness.
"""
from __future__ import annotations

import csv
import io
import logging
import math
import os
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .env import EnvironmentInstance, RoundRecord, SyntheticSpec, generate_instance, sample_feedback, score_round
from .errors import CabError, ConfigError, RoundError
from .numerics import derive_rng
from .policies import LEARNING_POLICIES, POLICIES, REFERENCE_POLICIES, PolicyConfig, make_policy

logger = logging.getLogger(__name__)

SWEEP_PARAMS = ("beta", "lambda", "K", "gamma")
POLICY_KEYS = {
    "lambda0": float,
    "c1": float,
    "a": float,
    "gamma": float,
    "delta": float,
    "fairx_samples": int,
    "use_theorem_constants": bool,
    "incremental_hessian": bool,
    "shuffle_users": bool,
}
PER_ROUND_COLUMNS = (
    "run_id", "seed", "policy", "sweep_value", "round",
    "satisfaction", "cum_satisfaction", "matches", "cum_matches",
)
AGGREGATE_COLUMNS = (
    "sweep_param", "sweep_value", "policy", "n_seeds",
    "cum_satisfaction_mean", "cum_satisfaction_se",
    "cum_matches_mean", "cum_matches_se",
    "norm_satisfaction_mean", "norm_satisfaction_se",
    "norm_matches_mean", "norm_matches_se",
)
SELECTION_COLUMNS = ("sweep_value", "policy", "arm", "probability", "last10_expected_match_sum")


@dataclass
class ExperimentConfig:
    """One experiment: environment, policies (name -> config overrides), seeds and sweep.

    Policy overrides are applied on top of ``PolicyConfig.experimental``
    for the cell's (d, N); the two reference policies always run.
    """

    env: SyntheticSpec = field(default_factory=SyntheticSpec)
    policies: dict[str, dict] = field(default_factory=lambda: {name: {} for name in LEARNING_POLICIES})
    n_seeds: int = 10
    sweep: tuple[str, list] | None = None
    output_dir: Path = Path("results")
    emit_per_round: bool = True
    jobs: int = 1

    def validate(self) -> "ExperimentConfig":
        self.env.validate()
        if self.n_seeds < 1:
            raise ConfigError("n_seeds must be at least 1")
        if self.jobs < 1:
            raise ConfigError("jobs must be at least 1")
        for name, overrides in self.policies.items():
            if name not in POLICIES:
                raise ConfigError(f"unknown policy {name!r}; choose from {sorted(POLICIES)}")
            unknown = set(overrides) - set(POLICY_KEYS)
            if unknown:
                raise ConfigError(f"unknown keys for policy {name!r}: {sorted(unknown)}")
        if self.sweep is not None:
            param, values = self.sweep
            if param not in SWEEP_PARAMS:
                raise ConfigError(f"sweep parameter must be one of {SWEEP_PARAMS}, got {param!r}")
            if not values:
                raise ConfigError("sweep needs at least one value")
            for v in values:
                self.cell_env(v).validate()
        return self

    @property
    def seeds(self) -> list[int]:
        return [self.env.seed + j for j in range(self.n_seeds)]

    @property
    def sweep_values(self) -> list:
        return [None] if self.sweep is None else list(self.sweep[1])

    def cell_env(self, sweep_value) -> SyntheticSpec:
        if self.sweep is None or sweep_value is None:
            return self.env
        param = self.sweep[0]
        if param == "beta":
            return replace(self.env, beta=float(sweep_value))
        if param == "lambda":
            return replace(self.env, popularity=float(sweep_value))
        if param == "K":
            return replace(self.env, n_arms=int(sweep_value))
        return self.env

    def policy_config(self, name: str, env: SyntheticSpec, sweep_value=None) -> PolicyConfig:
        cfg = PolicyConfig.experimental(env.dim, env.n_users, **self.policies.get(name, {}))
        if self.sweep is not None and self.sweep[0] == "gamma" and sweep_value is not None:
            cfg = replace(cfg, gamma=float(sweep_value))
        cfg = cfg.validate()
        return cfg.resolved(env.model(), env.satisfaction(), env.dim, env.certified_radius, env.n_users, env.horizon)


def run_policy_on_instance(
    inst: EnvironmentInstance, name: str, config: PolicyConfig, seed: int
) -> list[RoundRecord]:
    """Play the full horizon: observe slate, select, sample feedback, update, score."""
    spec = inst.spec
    model, sat = spec.model(), spec.satisfaction()
    policy = make_policy(name, spec.dim, model, sat, config, theta_star=inst.theta_star)
    policy_rng = derive_rng(seed, "policy", name)
    feedback_rng = derive_rng(seed, "feedback")
    records = []
    for t in range(spec.horizon):
        slate = inst.slate(t)
        try:
            alloc = policy.select(slate, policy_rng)
            outcomes = sample_feedback(slate, alloc, inst.theta_star, model, feedback_rng)
            policy.update(slate, alloc, outcomes)
        except CabError as exc:
            raise RoundError(t + 1, name, exc) from exc
        records.append(score_round(slate, alloc, outcomes, inst.theta_star, model, sat, t + 1, name))
    return records


def run_single(config: ExperimentConfig, policy: str, seed: int, sweep_value=None) -> list[RoundRecord]:
    env = config.cell_env(sweep_value)
    inst = generate_instance(env, derive_rng(seed, "env"))
    return run_policy_on_instance(inst, policy, config.policy_config(policy, env, sweep_value), seed)


def _policy_order(config: ExperimentConfig) -> list[str]:
    names = [n for n in config.policies if n not in REFERENCE_POLICIES]
    return names + list(REFERENCE_POLICIES)


def run_cell(config: ExperimentConfig, sweep_value, seed: int, instance: EnvironmentInstance | None = None):
    """All policies (plus references) on one instance; returns {policy: records}."""
    env = config.cell_env(sweep_value)
    inst = instance if instance is not None else generate_instance(env, derive_rng(seed, "env"))
    out = {}
    for name in _policy_order(config):
        out[name] = run_policy_on_instance(inst, name, config.policy_config(name, inst.spec, sweep_value), seed)
    return out


def _run_cell_task(args):
    config, sweep_value, seed = args
    return run_cell(config, sweep_value, seed)


@dataclass
class AggregateRecord:
    sweep_param: str
    sweep_value: object
    policy: str
    n_seeds: int
    cum_satisfaction: tuple[float, float]
    cum_matches: tuple[float, float]
    norm_satisfaction: tuple[float, float]
    norm_matches: tuple[float, float]
    selection_probability: np.ndarray
    last10_expected_match_sum: np.ndarray


@dataclass
class SuiteResult:
    config: ExperimentConfig
    runs: dict  # (sweep_value, seed, policy) -> list[RoundRecord]
    aggregates: list[AggregateRecord]

    def aggregate(self, policy: str, sweep_value=None) -> AggregateRecord:
        for rec in self.aggregates:
            if rec.policy == policy and rec.sweep_value == sweep_value:
                return rec
        raise KeyError((policy, sweep_value))

    def regret_proxy(self, policy: str, sweep_value=None) -> np.ndarray:
        """Seeds x T array of per-round (satisfaction reference - policy) satisfaction."""
        rows = []
        for seed in self.config.seeds:
            ref = self.runs[(sweep_value, seed, "oracle-satisfaction")]
            got = self.runs[(sweep_value, seed, policy)]
            rows.append([r.satisfaction - g.satisfaction for r, g in zip(ref, got)])
        return np.asarray(rows)


def mean_and_se(values) -> tuple[float, float]:
    x = np.asarray(values, dtype=float)
    if x.size < 2:
        return float(x.mean()), 0.0
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(x.size))


def aggregate_runs(config: ExperimentConfig, runs: dict) -> list[AggregateRecord]:
    param = config.sweep[0] if config.sweep else ""
    out = []
    for sv in config.sweep_values:
        for name in _policy_order(config):
            cum_s, cum_m, norm_s, norm_m, probs, last10 = [], [], [], [], [], []
            for seed in config.seeds:
                recs = runs[(sv, seed, name)]
                s = math.fsum(r.satisfaction for r in recs)
                m = math.fsum(r.matches for r in recs)
                ref_s = math.fsum(r.satisfaction for r in runs[(sv, seed, "oracle-satisfaction")])
                ref_m = math.fsum(r.matches for r in runs[(sv, seed, "oracle-match")])
                cum_s.append(s)
                cum_m.append(m)
                norm_s.append(s / ref_s if ref_s > 0 else math.nan)
                norm_m.append(m / ref_m if ref_m > 0 else math.nan)
                counts = np.sum([r.selection_counts for r in recs], axis=0)
                probs.append(counts / counts.sum())
                last10.append(np.mean([r.per_arm_expected_match_sum for r in recs[-10:]], axis=0))
            out.append(
                AggregateRecord(
                    sweep_param=param,
                    sweep_value=sv,
                    policy=name,
                    n_seeds=len(config.seeds),
                    cum_satisfaction=mean_and_se(cum_s),
                    cum_matches=mean_and_se(cum_m),
                    norm_satisfaction=mean_and_se(norm_s),
                    norm_matches=mean_and_se(norm_m),
                    selection_probability=np.mean(probs, axis=0),
                    last10_expected_match_sum=np.mean(last10, axis=0),
                )
            )
    return out


def fmt(x) -> str:
    """Round-trip-exact text for CSV cells."""
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    return buf.getvalue()


def per_round_rows(config: ExperimentConfig, runs: dict):
    run_id = 0
    for sv in config.sweep_values:
        for seed in config.seeds:
            for name in _policy_order(config):
                cs = cm = 0.0
                for r in runs[(sv, seed, name)]:
                    cs += r.satisfaction
                    cm += r.matches
                    yield (run_id, seed, name, sv, r.round, r.satisfaction, cs, r.matches, cm)
                run_id += 1


def aggregate_rows(aggregates: list[AggregateRecord]):
    for a in aggregates:
        yield (
            a.sweep_param, a.sweep_value, a.policy, a.n_seeds,
            *a.cum_satisfaction, *a.cum_matches, *a.norm_satisfaction, *a.norm_matches,
        )


def selection_rows(aggregates: list[AggregateRecord]):
    for a in aggregates:
        for arm, (p, s) in enumerate(zip(a.selection_probability, a.last10_expected_match_sum)):
            yield (a.sweep_value, a.policy, arm, float(p), float(s))


def write_outputs(result: SuiteResult, output_dir) -> dict[str, Path]:
    """Write the CSVs atomically: all files are rendered before any is moved into place."""
    out = Path(output_dir)
    texts = {"aggregate.csv": _csv_text(AGGREGATE_COLUMNS, aggregate_rows(result.aggregates))}
    texts["selection.csv"] = _csv_text(SELECTION_COLUMNS, selection_rows(result.aggregates))
    if result.config.emit_per_round:
        texts["per_round.csv"] = _csv_text(PER_ROUND_COLUMNS, per_round_rows(result.config, result.runs))
    out.mkdir(parents=True, exist_ok=True)
    staged = {}
    try:
        for name, text in texts.items():
            fd, tmp = tempfile.mkstemp(prefix=f".{name}.", dir=out)
            with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
            staged[name] = tmp
        paths = {}
        for name, tmp in staged.items():
            os.replace(tmp, out / name)
            paths[name] = out / name
        return paths
    finally:
        for tmp in staged.values():
            if os.path.exists(tmp):
                os.remove(tmp)


def run_suite(config: ExperimentConfig, write: bool = True) -> SuiteResult:
    """Run every (sweep value, seed) cell, aggregate, and optionally write the CSVs."""
    config.validate()
    tasks = [(config, sv, seed) for sv in config.sweep_values for seed in config.seeds]
    logger.info("running %d cells x %d policies", len(tasks), len(_policy_order(config)))
    if config.jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            cells = list(pool.map(_run_cell_task, tasks))
    else:
        cells = [_run_cell_task(t) for t in tasks]
    runs = {}
    for (_, sv, seed), cell in zip(tasks, cells):
        for name, recs in cell.items():
            runs[(sv, seed, name)] = recs
    result = SuiteResult(config, runs, aggregate_runs(config, runs))
    if write:
        write_outputs(result, config.output_dir)
    return result

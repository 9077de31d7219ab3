"""Synthetic allocation environment with tunable arm popularity.

Features are phi(i, a) = lam * phi_pop(i, a) + (1 - lam) * phi_base(i, a)
with standard-normal entries; phi_pop is sorted so that, in every
dimension, arm 0 is the most popular and popularity falls with the index.
All T slates are drawn before any policy acts.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DimensionError
from .glm import (
    ContextSlate,
    Family,
    GlmModel,
    SatisfactionFunction,
    check_allocation,
    f_value,
)

INSTANCE_SCHEMA = "cab-instance/1"


@dataclass(frozen=True)
class SyntheticSpec:
    n_users: int = 50
    n_arms: int = 10
    dim: int = 5
    horizon: int = 500
    popularity: float = 0.5
    beta: float = 5.0
    seed: int = 0
    normalize_features: bool = False
    static_contexts: bool = False
    family: str = "logistic"
    # certified parameter radius D; None means sqrt(dim)
    radius: float | None = None

    def validate(self) -> "SyntheticSpec":
        for name in ("n_users", "n_arms", "dim", "horizon"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be at least 1")
        if not 0.0 <= self.popularity <= 1.0:
            raise ConfigError(f"popularity must lie in [0, 1], got {self.popularity}")
        if not self.beta > 0:
            raise ConfigError(f"beta must be positive, got {self.beta}")
        try:
            Family(self.family)
        except ValueError:
            raise ConfigError(f"unknown family {self.family!r}") from None
        return self

    @property
    def certified_radius(self) -> float:
        return math.sqrt(self.dim) if self.radius is None else float(self.radius)

    def model(self) -> GlmModel:
        return GlmModel.from_name(self.family, self.certified_radius)

    def satisfaction(self) -> SatisfactionFunction:
        return SatisfactionFunction.capped_linear(self.beta)


@dataclass
class EnvironmentInstance:
    spec: SyntheticSpec
    theta_star: np.ndarray
    features: np.ndarray  # T x N x K x d

    def slate(self, t: int) -> ContextSlate:
        """Slate for 0-based round ``t``."""
        return ContextSlate(self.features[t])

    @property
    def slates(self) -> list[ContextSlate]:
        return [self.slate(t) for t in range(self.features.shape[0])]

    def to_json(self) -> dict:
        return {
            "schema": INSTANCE_SCHEMA,
            "spec": asdict(self.spec),
            "theta_star": [float(v) for v in self.theta_star],
            "shape": list(self.features.shape),
            "features": [float(v) for v in self.features.ravel()],
        }

    @classmethod
    def from_json(cls, data: dict) -> "EnvironmentInstance":
        if data.get("schema") != INSTANCE_SCHEMA:
            raise ConfigError(f"unsupported instance schema {data.get('schema')!r}")
        spec = SyntheticSpec(**data["spec"]).validate()
        shape = tuple(data["shape"])
        expected = (spec.horizon, spec.n_users, spec.n_arms, spec.dim)
        if shape != expected:
            raise ConfigError(f"feature shape {shape} does not match spec {expected}")
        features = np.asarray(data["features"], dtype=float).reshape(shape)
        theta = np.asarray(data["theta_star"], dtype=float)
        if theta.shape != (spec.dim,):
            raise ConfigError("theta_star length does not match spec dim")
        return cls(spec, theta, features)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json()), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "EnvironmentInstance":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read instance file {path}: {exc}") from exc
        return cls.from_json(data)


def _draw_slate(spec: SyntheticSpec, rng: np.random.Generator) -> np.ndarray:
    n, k, d = spec.n_users, spec.n_arms, spec.dim
    pop = rng.standard_normal((n, d, k))
    # descending along the arm axis, each (user, dimension) sorted independently
    pop = -np.sort(-pop, axis=2)
    pop = pop.transpose(0, 2, 1)
    base = rng.standard_normal((n, k, d))
    phi = spec.popularity * pop + (1.0 - spec.popularity) * base
    if spec.normalize_features:
        norms = np.linalg.norm(phi, axis=2, keepdims=True)
        phi = phi / np.maximum(norms, 1.0e-300)
    return phi


def generate_instance(spec: SyntheticSpec, rng: np.random.Generator) -> EnvironmentInstance:
    spec.validate()
    theta = rng.uniform(0.0, 1.0, size=spec.dim)
    if spec.static_contexts:
        one = _draw_slate(spec, rng)
        features = np.broadcast_to(one, (spec.horizon,) + one.shape).copy()
    else:
        features = np.stack([_draw_slate(spec, rng) for _ in range(spec.horizon)])
    return EnvironmentInstance(spec, theta, features)


def sample_feedback(slate: ContextSlate, alloc, theta_star, model: GlmModel, rng: np.random.Generator) -> np.ndarray:
    """Outcome per user: Bernoulli(mu) for logistic, mean plus unit Gaussian noise for linear."""
    means = model.mean(slate.selected(alloc) @ np.asarray(theta_star, dtype=float))
    if model.family is Family.LOGISTIC:
        return (rng.random(slate.n_users) < means).astype(float)
    return means + rng.standard_normal(slate.n_users)


@dataclass
class RoundRecord:
    round: int
    policy: str
    satisfaction: float
    matches: float
    per_arm_expected_match_sum: np.ndarray = field(repr=False)
    selection_counts: np.ndarray = field(repr=False)


def score_round(
    slate: ContextSlate,
    alloc,
    outcomes,
    theta_star,
    model: GlmModel,
    sat: SatisfactionFunction,
    round_index: int = 1,
    policy: str = "",
) -> RoundRecord:
    alloc = check_allocation(alloc, slate.n_users, slate.n_arms)
    outcomes = np.asarray(outcomes, dtype=float)
    if outcomes.shape != (slate.n_users,):
        raise DimensionError(f"expected {slate.n_users} outcomes, got shape {outcomes.shape}")
    theta_star = np.asarray(theta_star, dtype=float)
    means = model.mean(slate.selected(alloc) @ theta_star)
    return RoundRecord(
        round=round_index,
        policy=policy,
        satisfaction=f_value(slate, alloc, theta_star, model, sat),
        matches=float(np.sum(outcomes)),
        per_arm_expected_match_sum=np.bincount(alloc, weights=means, minlength=slate.n_arms),
        selection_counts=np.bincount(alloc, minlength=slate.n_arms),
    )

"""Allocation policies: CAB-UCB, the two CAB-TS variants, Max-match, FairX,
Random, and the two true-parameter reference policies.

Every policy exposes ``select(slate, rng) -> allocation`` and
``update(slate, alloc, outcomes)``. Learning policies keep a ``PolicyState``;
the plug-in estimate is refit at the end of each ``update`` so it is fresh
for the next ``select``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import solve_triangular

from .errors import DimensionError, DistributionError, ParameterError
from .glm import (
    ContextSlate,
    GlmModel,
    ObservationLog,
    SatisfactionFunction,
    check_allocation,
    compute_theoretical_c1,
    fit_regularized_mle,
)
from .numerics import PsdMatrix, mahalanobis_inv_norm, sample_scaled_inverse_gaussian
from .oracle import WelfareInstance, greedy_allocate


@dataclass(frozen=True)
class PolicyConfig:
    """Tuning constants shared by the learning policies.

    ``experimental`` gives the defaults used for the synthetic benchmarks
    (lambda0 = d, c1 = sqrt(d), a = sqrt(dN), gamma = 0.1).
    """

    lambda0: float = 5.0
    c1: float = math.sqrt(5.0)
    a: float = math.sqrt(250.0)
    gamma: float = 0.1
    delta: float = 0.05
    fairx_samples: int = 50
    use_theorem_constants: bool = False
    incremental_hessian: bool = False
    shuffle_users: bool = False

    @classmethod
    def experimental(cls, dim: int, n_users: int, **overrides) -> "PolicyConfig":
        base = cls(lambda0=float(dim), c1=math.sqrt(dim), a=math.sqrt(dim * n_users))
        return replace(base, **overrides)

    def validate(self) -> "PolicyConfig":
        for name in ("lambda0", "gamma"):
            if not getattr(self, name) > 0:
                raise ParameterError(f"{name} must be positive, got {getattr(self, name)}")
        for name in ("c1", "a"):
            if not getattr(self, name) >= 0:
                raise ParameterError(f"{name} must be nonnegative, got {getattr(self, name)}")
        if not 0 < self.delta < 1:
            raise ParameterError(f"delta must lie in (0, 1), got {self.delta}")
        if self.fairx_samples < 1:
            raise ParameterError("fairx_samples must be at least 1")
        return self

    def resolved(
        self, model: GlmModel, sat: SatisfactionFunction, dim: int, radius: float, n_users: int, horizon: int
    ) -> "PolicyConfig":
        """Replace c1 and a by their regret-theorem values when requested."""
        if not self.use_theorem_constants:
            return self
        c1 = compute_theoretical_c1(model, sat, dim, radius, self.lambda0, self.delta, n_users, horizon)
        return replace(self, c1=c1, a=c1 * math.sqrt(model.lipschitz * n_users))


@dataclass
class PolicyState:
    config: PolicyConfig
    model: GlmModel
    sat: SatisfactionFunction
    V: PsdMatrix
    theta_bar: np.ndarray
    log: ObservationLog
    H: PsdMatrix | None = None
    t: int = 1
    # running sums for the stale-curvature H variant
    _hxx: np.ndarray | None = field(default=None, repr=False)
    _hw: float = field(default=0.0, repr=False)

    @classmethod
    def initial(cls, dim: int, config: PolicyConfig, model: GlmModel, sat: SatisfactionFunction, with_h: bool = False):
        config.validate()
        h = PsdMatrix.scaled_identity(dim, model.lipschitz * config.lambda0) if with_h else None
        return cls(
            config=config,
            model=model,
            sat=sat,
            V=PsdMatrix.scaled_identity(dim, config.lambda0),
            theta_bar=np.zeros(dim),
            log=ObservationLog(dim),
            H=h,
            _hxx=np.zeros((dim, dim)) if with_h else None,
        )

    @property
    def ridge_weight(self) -> float:
        return self.model.curvature_floor * self.config.lambda0


def laplace_precision(log: ObservationLog, theta: np.ndarray, lambda0: float, model: GlmModel) -> np.ndarray:
    """sum over logged x of mudot(x^T theta) (x x^T + lambda0/n I), n = len(log).

    Falls back to L_mu * lambda0 * I before any observation.
    """
    n = len(log)
    d = log.dim
    if n == 0:
        return model.lipschitz * lambda0 * np.eye(d)
    x = log.features
    w = model.mean_deriv(x @ theta)
    return (x.T * w) @ x + (lambda0 / n) * float(np.sum(w)) * np.eye(d)


def _check_slate(state: PolicyState, slate: ContextSlate) -> None:
    if slate.dim != state.V.dim:
        raise DimensionError(f"slate dim {slate.dim} does not match policy dim {state.V.dim}")


def ucb_bonus(state: PolicyState, slate: ContextSlate) -> np.ndarray:
    """N x K matrix c1 * ||phi(i, a)||_{V^{-1}}."""
    return state.config.c1 * mahalanobis_inv_norm(state.V, slate.features)


def ucb_instance(state: PolicyState, slate: ContextSlate) -> WelfareInstance:
    _check_slate(state, slate)
    v = state.model.mean(slate.features @ state.theta_bar)
    return WelfareInstance(v, ucb_bonus(state, slate), state.sat)


def _greedy(state: PolicyState, inst: WelfareInstance, rng: np.random.Generator | None) -> np.ndarray:
    order = None
    if state.config.shuffle_users:
        if rng is None:
            raise ParameterError("shuffle_users needs a random generator")
        order = rng.permutation(inst.n_users)
    return greedy_allocate(inst, order=order)[0]


def ucb_select(state: PolicyState, slate: ContextSlate, rng: np.random.Generator | None = None) -> np.ndarray:
    return _greedy(state, ucb_instance(state, slate), rng)


def ts_eps_instance(state: PolicyState, slate: ContextSlate, rng: np.random.Generator) -> WelfareInstance:
    """Plug-in values plus linear perturbations phi(i,a)^T eps_i, eps_i iid N(0, a^2 H^{-1})."""
    _check_slate(state, slate)
    eps = sample_scaled_inverse_gaussian(state.H, state.config.a, rng, size=slate.n_users)
    v = state.model.mean(slate.features @ state.theta_bar)
    w = np.einsum("nkd,nd->nk", slate.features, eps)
    return WelfareInstance(v, w, state.sat)


def ts_eps_select(state: PolicyState, slate: ContextSlate, rng: np.random.Generator) -> np.ndarray:
    return _greedy(state, ts_eps_instance(state, slate, rng), rng)


def ts_theta_instance(
    state: PolicyState, slate: ContextSlate, rng: np.random.Generator, share_sample: bool = False
) -> WelfareInstance:
    """Values mu(phi(i,a)^T theta_i) with theta_i iid N(theta_bar, a^2 H^{-1}).

    ``share_sample`` reuses one draw for every user.
    """
    _check_slate(state, slate)
    n = 1 if share_sample else slate.n_users
    draws = sample_scaled_inverse_gaussian(state.H, state.config.a, rng, size=n)
    thetas = np.broadcast_to(state.theta_bar + draws, (slate.n_users, slate.dim))
    v = state.model.mean(np.einsum("nkd,nd->nk", slate.features, thetas))
    return WelfareInstance(v, None, state.sat)


def ts_theta_select(
    state: PolicyState, slate: ContextSlate, rng: np.random.Generator, share_sample: bool = False
) -> np.ndarray:
    return _greedy(state, ts_theta_instance(state, slate, rng, share_sample), rng)


def max_match_select(state: PolicyState, slate: ContextSlate) -> np.ndarray:
    """Per-user argmax of mu(phi^T theta_bar) + c1 ||phi||_{V^{-1}}; exact for this modular objective."""
    _check_slate(state, slate)
    scores = state.model.mean(slate.features @ state.theta_bar) + ucb_bonus(state, slate)
    return np.argmax(scores, axis=1).astype(np.intp)


def exposure_probabilities(slate: ContextSlate, theta: np.ndarray, model: GlmModel) -> np.ndarray:
    """Rows P(i, a) = mu(phi(i,a)^T theta) / sum_a' mu(phi(i,a')^T theta)."""
    m = model.mean(slate.features @ theta)
    totals = m.sum(axis=1, keepdims=True)
    if np.any(totals <= 0):
        raise DistributionError("an exposure row sums to zero; the mean function must be positive")
    return m / totals


def fairx_candidates(state: PolicyState, rng: np.random.Generator) -> np.ndarray:
    """theta_bar followed by points on the ellipsoid ||theta - theta_bar||_V = sqrt(gamma)."""
    d = state.V.dim
    u = rng.standard_normal((state.config.fairx_samples, d))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    offsets = solve_triangular(state.V.cholesky(), u.T, lower=True, trans="T").T
    return np.vstack([state.theta_bar, state.theta_bar + math.sqrt(state.config.gamma) * offsets])


def fairx_choose_theta(state: PolicyState, slate: ContextSlate, candidates: np.ndarray) -> np.ndarray:
    m = state.model.mean(np.einsum("nkd,cd->cnk", slate.features, candidates))
    totals = m.sum(axis=2, keepdims=True)
    if np.any(totals <= 0):
        raise DistributionError("an exposure row sums to zero; the mean function must be positive")
    scores = np.sum(m * m / totals, axis=(1, 2))
    return candidates[int(np.argmax(scores))]


def sample_from_rows(p: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One independent categorical draw per row of ``p``."""
    u = rng.random(p.shape[0])
    cum = np.cumsum(p, axis=1)
    return np.minimum((u[:, None] >= cum).sum(axis=1), p.shape[1] - 1).astype(np.intp)


def fairx_select(state: PolicyState, slate: ContextSlate, rng: np.random.Generator) -> np.ndarray:
    _check_slate(state, slate)
    theta = fairx_choose_theta(state, slate, fairx_candidates(state, rng))
    return sample_from_rows(exposure_probabilities(slate, theta, state.model), rng)


def random_select(slate: ContextSlate, rng: np.random.Generator) -> np.ndarray:
    return rng.integers(slate.n_arms, size=slate.n_users).astype(np.intp)


def oracle_satisfaction_select(
    slate: ContextSlate, theta_star, model: GlmModel, sat: SatisfactionFunction
) -> np.ndarray:
    v = model.mean(slate.features @ np.asarray(theta_star, dtype=float))
    return greedy_allocate(WelfareInstance(v, None, sat))[0]


def oracle_match_select(slate: ContextSlate, theta_star, model: GlmModel) -> np.ndarray:
    v = model.mean(slate.features @ np.asarray(theta_star, dtype=float))
    return np.argmax(v, axis=1).astype(np.intp)


def policy_update(state: PolicyState, slate: ContextSlate, alloc, outcomes, refit: bool = True) -> None:
    """Log the round, grow V, refit theta_bar and (for TS) rebuild H."""
    _check_slate(state, slate)
    alloc = check_allocation(alloc, slate.n_users, slate.n_arms)
    outcomes = np.asarray(outcomes, dtype=float)
    if outcomes.shape != (slate.n_users,):
        raise DimensionError(f"expected {slate.n_users} outcomes, got shape {outcomes.shape}")
    x = slate.selected(alloc)
    state.log.append_round(x, outcomes)
    state.V.add_outer_products(x)
    if refit:
        state.theta_bar = fit_regularized_mle(state.log, state.model, state.ridge_weight, theta0=state.theta_bar)
    if state.H is not None:
        if state.config.incremental_hessian:
            w = state.model.mean_deriv(x @ state.theta_bar)
            state._hxx += (x.T * w) @ x
            state._hw += float(np.sum(w))
            h = state._hxx + (state.config.lambda0 / len(state.log)) * state._hw * np.eye(x.shape[1])
        else:
            h = laplace_precision(state.log, state.theta_bar, state.config.lambda0, state.model)
        state.H = PsdMatrix(h)
    state.t += 1


class Policy:
    """Common interface. Subclasses set ``name`` and implement ``select``."""

    name = "policy"
    learns = False

    def __init__(self, dim: int, model: GlmModel, sat: SatisfactionFunction, config: PolicyConfig | None = None):
        self.dim = dim
        self.model = model
        self.sat = sat
        self.config = (config or PolicyConfig.experimental(dim, 1)).validate()
        self.state = PolicyState.initial(dim, self.config, model, sat, with_h=self.uses_h) if self.learns else None

    uses_h = False

    def select(self, slate: ContextSlate, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def update(self, slate: ContextSlate, alloc, outcomes) -> None:
        if self.state is not None:
            policy_update(self.state, slate, alloc, outcomes)


class CabUcb(Policy):
    name = "cab-ucb"
    learns = True

    def select(self, slate, rng):
        return ucb_select(self.state, slate, rng)


class CabTsEps(Policy):
    name = "cab-ts-eps"
    learns = True
    uses_h = True

    def select(self, slate, rng):
        return ts_eps_select(self.state, slate, rng)


class CabTsTheta(Policy):
    name = "cab-ts-theta"
    learns = True
    uses_h = True
    share_sample = False

    def select(self, slate, rng):
        return ts_theta_select(self.state, slate, rng, self.share_sample)


class MaxMatch(Policy):
    name = "max-match"
    learns = True

    def select(self, slate, rng):
        return max_match_select(self.state, slate)


class FairX(Policy):
    name = "fairx"
    learns = True

    def select(self, slate, rng):
        return fairx_select(self.state, slate, rng)


class RandomPolicy(Policy):
    name = "random"

    def select(self, slate, rng):
        return random_select(slate, rng)


class _TrueParameterPolicy(Policy):
    def __init__(self, dim, model, sat, config=None, theta_star=None):
        super().__init__(dim, model, sat, config)
        if theta_star is None:
            raise ParameterError(f"{self.name} needs the true parameter")
        self.theta_star = np.asarray(theta_star, dtype=float)


class SatisfactionOracle(_TrueParameterPolicy):
    name = "oracle-satisfaction"

    def select(self, slate, rng):
        return oracle_satisfaction_select(slate, self.theta_star, self.model, self.sat)


class MatchOracle(_TrueParameterPolicy):
    name = "oracle-match"

    def select(self, slate, rng):
        return oracle_match_select(slate, self.theta_star, self.model)


POLICIES: dict[str, type[Policy]] = {
    cls.name: cls
    for cls in (CabUcb, CabTsEps, CabTsTheta, MaxMatch, FairX, RandomPolicy, SatisfactionOracle, MatchOracle)
}
LEARNING_POLICIES = ("cab-ucb", "cab-ts-eps", "cab-ts-theta", "random", "max-match", "fairx")
REFERENCE_POLICIES = ("oracle-satisfaction", "oracle-match")


def make_policy(
    name: str,
    dim: int,
    model: GlmModel,
    sat: SatisfactionFunction,
    config: PolicyConfig | None = None,
    theta_star=None,
) -> Policy:
    try:
        cls = POLICIES[name]
    except KeyError:
        raise ParameterError(f"unknown policy {name!r}; choose from {sorted(POLICIES)}") from None
    if issubclass(cls, _TrueParameterPolicy):
        return cls(dim, model, sat, config, theta_star=theta_star)
    return cls(dim, model, sat, config)

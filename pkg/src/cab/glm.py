"""Link families, satisfaction functions, the allocation objective and the
ridge-regularized GLM maximum-likelihood estimator."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .errors import ConvergenceError, DimensionError, ParameterError


class Family(str, enum.Enum):
    LOGISTIC = "logistic"
    LINEAR = "linear"


@dataclass(frozen=True)
class GlmModel:
    """Exponential-family feedback model with canonical link.

    ``mean`` is the derivative of ``cumulant``; ``curvature_floor`` is the
    smallest value of ``mean_deriv`` on the certified domain |z| <= 2D + 1.
    """

    family: Family
    lipschitz: float
    curvature_floor: float
    subgaussian: float

    @classmethod
    def logistic(cls, radius: float = 1.0) -> "GlmModel":
        z = 2.0 * radius + 1.0
        s = float(expit(z))
        return cls(Family.LOGISTIC, lipschitz=0.25, curvature_floor=s * (1.0 - s), subgaussian=0.5)

    @classmethod
    def linear(cls) -> "GlmModel":
        return cls(Family.LINEAR, lipschitz=1.0, curvature_floor=1.0, subgaussian=1.0)

    @classmethod
    def from_name(cls, name: str, radius: float = 1.0) -> "GlmModel":
        family = Family(name.lower())
        return cls.logistic(radius) if family is Family.LOGISTIC else cls.linear()

    def mean(self, z):
        if self.family is Family.LOGISTIC:
            return expit(z)
        return np.asarray(z, dtype=float)

    def mean_deriv(self, z):
        if self.family is Family.LOGISTIC:
            s = expit(z)
            return s * (1.0 - s)
        return np.ones_like(np.asarray(z, dtype=float))

    def cumulant(self, z):
        if self.family is Family.LOGISTIC:
            return np.logaddexp(0.0, z)
        z = np.asarray(z, dtype=float)
        return 0.5 * z * z


class SatisfactionKind(str, enum.Enum):
    CAPPED_LINEAR = "capped_linear"
    IDENTITY = "identity"


@dataclass(frozen=True)
class SatisfactionFunction:
    """Concave nondecreasing arm satisfaction r.

    ``CappedLinear(beta)`` is r(x) = min(x, beta). ``Identity`` has no bound;
    its ``bound`` is ``inf`` and it exists for oracle tests only.
    """

    kind: SatisfactionKind
    beta: float = math.inf
    lipschitz: float = 1.0

    @classmethod
    def capped_linear(cls, beta: float) -> "SatisfactionFunction":
        if not beta > 0:
            raise ParameterError(f"beta must be positive, got {beta}")
        return cls(SatisfactionKind.CAPPED_LINEAR, beta=float(beta))

    @classmethod
    def identity(cls) -> "SatisfactionFunction":
        return cls(SatisfactionKind.IDENTITY)

    @property
    def bound(self) -> float:
        return self.beta

    def __call__(self, x):
        if self.kind is SatisfactionKind.CAPPED_LINEAR:
            return np.minimum(x, self.beta)
        return np.asarray(x, dtype=float)


@dataclass
class ContextSlate:
    """One round's features: ``features[i, a]`` is the d-vector for user i, arm a."""

    features: np.ndarray

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=float)
        if self.features.ndim != 3:
            raise DimensionError(f"features must be N x K x d, got shape {self.features.shape}")
        if not np.all(np.isfinite(self.features)):
            raise ParameterError("features contain non-finite values")

    @property
    def n_users(self) -> int:
        return self.features.shape[0]

    @property
    def n_arms(self) -> int:
        return self.features.shape[1]

    @property
    def dim(self) -> int:
        return self.features.shape[2]

    def selected(self, alloc: np.ndarray) -> np.ndarray:
        """Rows phi(i, alloc[i]) as an N x d array."""
        alloc = check_allocation(alloc, self.n_users, self.n_arms)
        return self.features[np.arange(self.n_users), alloc]


def check_allocation(alloc, n_users: int, n_arms: int) -> np.ndarray:
    """Validate an allocation (one arm index in [0, K) per user) and return it as an int array."""
    alloc = np.asarray(alloc)
    if alloc.shape != (n_users,):
        raise DimensionError(f"allocation must have length {n_users}, got shape {alloc.shape}")
    if n_users and (not np.issubdtype(alloc.dtype, np.integer) or alloc.min() < 0 or alloc.max() >= n_arms):
        raise ParameterError(f"allocation entries must be integers in [0, {n_arms})")
    return alloc.astype(np.intp, copy=False)


def arm_preimages(alloc: np.ndarray, n_arms: int) -> list[np.ndarray]:
    """Users assigned to each arm."""
    return [np.flatnonzero(alloc == a) for a in range(n_arms)]


@dataclass
class ObservationLog:
    """Growing record of (feature, outcome) pairs, one block of N per round."""

    dim: int
    _x: np.ndarray = field(init=False, repr=False)
    _y: np.ndarray = field(init=False, repr=False)
    _n: int = field(default=0, init=False)
    rounds_seen: int = field(default=0, init=False)

    def __post_init__(self):
        self._x = np.empty((64, self.dim))
        self._y = np.empty(64)

    def __len__(self) -> int:
        return self._n

    @property
    def features(self) -> np.ndarray:
        return self._x[: self._n]

    @property
    def outcomes(self) -> np.ndarray:
        return self._y[: self._n]

    @property
    def entries(self) -> list[tuple[np.ndarray, float]]:
        return [(x, float(y)) for x, y in zip(self.features, self.outcomes)]

    def append_round(self, x: np.ndarray, y: np.ndarray) -> None:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        y = np.atleast_1d(np.asarray(y, dtype=float))
        if x.shape[1] != self.dim or x.shape[0] != y.shape[0]:
            raise DimensionError(f"round block shapes {x.shape} / {y.shape} do not match dim {self.dim}")
        need = self._n + x.shape[0]
        if need > self._x.shape[0]:
            cap = max(need, 2 * self._x.shape[0])
            self._x = np.concatenate([self._x[: self._n], np.empty((cap - self._n, self.dim))])
            self._y = np.concatenate([self._y[: self._n], np.empty(cap - self._n)])
        self._x[self._n : need] = x
        self._y[self._n : need] = y
        self._n = need
        self.rounds_seen += 1


def _check_theta(theta, dim: int) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (dim,):
        raise DimensionError(f"theta has shape {theta.shape}, expected ({dim},)")
    if not np.all(np.isfinite(theta)):
        raise ParameterError("theta must be finite")
    return theta


def expected_match_matrix(slate: ContextSlate, theta, model: GlmModel) -> np.ndarray:
    """N x K matrix of mu(phi(i, a)^T theta)."""
    theta = _check_theta(theta, slate.dim)
    return model.mean(slate.features @ theta)


def f_value(slate: ContextSlate, alloc, theta, model: GlmModel, sat: SatisfactionFunction) -> float:
    """Total arm satisfaction sum_a r(sum_{i -> a} mu(phi(i,a)^T theta)).

    Arms that receive nobody contribute r(0).
    """
    theta = _check_theta(theta, slate.dim)
    alloc = check_allocation(alloc, slate.n_users, slate.n_arms)
    z = np.einsum("nd,d->n", slate.features[np.arange(slate.n_users), alloc], theta)
    sums = np.bincount(alloc, weights=model.mean(z), minlength=slate.n_arms)
    return float(np.sum(sat(sums)))


def regularized_nll(x: np.ndarray, y: np.ndarray, theta: np.ndarray, model: GlmModel, ridge_weight: float) -> float:
    z = x @ theta
    return float(np.sum(model.cumulant(z) - y * z) + 0.5 * ridge_weight * theta @ theta)


def regularized_nll_grad(x: np.ndarray, y: np.ndarray, theta: np.ndarray, model: GlmModel, ridge_weight: float) -> np.ndarray:
    return x.T @ (model.mean(x @ theta) - y) + ridge_weight * theta


def fit_regularized_mle(
    log: ObservationLog,
    model: GlmModel,
    ridge_weight: float,
    theta0=None,
    tol: float = 1e-8,
    max_iter: int = 100,
) -> np.ndarray:
    """Minimize sum[m(x^T theta) - y x^T theta] + ridge_weight/2 ||theta||^2.

    Damped Newton with step halving; ``theta0`` warm-starts the iteration.
    Raises ConvergenceError if the gradient norm is still above ``tol``
    after ``max_iter`` Newton steps.
    """
    if not ridge_weight > 0:
        raise ParameterError(f"ridge_weight must be positive, got {ridge_weight}")
    d = log.dim
    if len(log) == 0:
        return np.zeros(d)
    x, y = log.features, log.outcomes
    theta = np.zeros(d) if theta0 is None else np.array(theta0, dtype=float)
    eye = np.eye(d)

    obj = regularized_nll(x, y, theta, model, ridge_weight)
    grad = regularized_nll_grad(x, y, theta, model, ridge_weight)
    gnorm = float(np.linalg.norm(grad))
    for it in range(max_iter):
        if gnorm <= tol:
            return theta
        w = model.mean_deriv(x @ theta)
        hess = (x.T * w) @ x + ridge_weight * eye
        step = np.linalg.solve(hess, grad)
        t = 1.0
        while True:
            cand = theta - t * step
            cand_obj = regularized_nll(x, y, cand, model, ridge_weight)
            cand_grad = regularized_nll_grad(x, y, cand, model, ridge_weight)
            cand_gnorm = float(np.linalg.norm(cand_grad))
            # near the optimum the objective change is below rounding; accept on gradient decrease too
            if cand_obj < obj or (cand_obj <= obj + 1e-12 * abs(obj) and cand_gnorm < gnorm):
                break
            t *= 0.5
            if t < 1e-12:
                raise ConvergenceError("line search failed", gnorm, it)
        theta, obj, grad, gnorm = cand, cand_obj, cand_grad, cand_gnorm
    if gnorm <= tol:
        return theta
    raise ConvergenceError("Newton iteration did not converge", gnorm, max_iter)


def compute_theoretical_c1(
    model: GlmModel,
    sat: SatisfactionFunction,
    dim: int,
    radius: float,
    lambda0: float,
    delta: float,
    n_users: int,
    horizon: int,
) -> float:
    """Exploration width c1 that makes the UCB regret guarantee hold w.p. 1 - 2 delta."""
    if not 0.0 < delta < 1.0:
        raise ParameterError(f"delta must lie in (0, 1), got {delta}")
    if not lambda0 > 0:
        raise ParameterError(f"lambda0 must be positive, got {lambda0}")
    kappa = model.curvature_floor
    width = model.subgaussian * math.sqrt(
        dim * math.log(1.0 + n_users * horizon / (dim * lambda0)) + 2.0 * math.log(1.0 / delta)
    )
    return sat.lipschitz * model.lipschitz / kappa * (width + kappa * radius * math.sqrt(lambda0))

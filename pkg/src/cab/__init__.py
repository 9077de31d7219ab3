"""Combinatorial allocation bandits with generalized-linear feedback."""
from .env import EnvironmentInstance, RoundRecord, SyntheticSpec, generate_instance, sample_feedback, score_round
from .glm import (
    ContextSlate,
    GlmModel,
    ObservationLog,
    SatisfactionFunction,
    compute_theoretical_c1,
    expected_match_matrix,
    f_value,
    fit_regularized_mle,
)
from .harness import ExperimentConfig, run_single, run_suite
from .numerics import PsdMatrix, derive_rng, mahalanobis_inv_norm, sample_scaled_inverse_gaussian
from .oracle import WelfareInstance, brute_force_allocate, greedy_allocate
from .policies import POLICIES, PolicyConfig, make_policy

__version__ = "0.1.0"

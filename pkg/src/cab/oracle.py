"""Allocation oracle for sum_a r(sum_{i->a} v_i(a)) + sum_i w_i(pi(i)).

``greedy_allocate`` is the plain greedy for submodular welfare: a 1/2
approximation when all linear weights are nonnegative, exact when r is the
identity. ``brute_force_allocate`` enumerates every allocation and serves as
the reference solver in tests.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, ParameterError, SizeError
from .glm import SatisfactionFunction, check_allocation

MAX_ENUMERATION = 10**6

GREEDY_GUARANTEE = 0.5


@dataclass
class WelfareInstance:
    values: np.ndarray
    linear_weights: np.ndarray
    sat: SatisfactionFunction

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2:
            raise DimensionError(f"values must be N x K, got shape {self.values.shape}")
        if self.linear_weights is None:
            self.linear_weights = np.zeros_like(self.values)
        self.linear_weights = np.asarray(self.linear_weights, dtype=float)
        if self.linear_weights.shape != self.values.shape:
            raise DimensionError("values and linear_weights must have the same shape")
        if np.any(self.values < 0):
            raise ParameterError("values must be nonnegative")

    @property
    def n_users(self) -> int:
        return self.values.shape[0]

    @property
    def n_arms(self) -> int:
        return self.values.shape[1]

    @property
    def monotone(self) -> bool:
        return not np.any(self.linear_weights < 0)

    def objective(self, alloc) -> float:
        alloc = check_allocation(alloc, self.n_users, self.n_arms)
        users = np.arange(self.n_users)
        sums = np.bincount(alloc, weights=self.values[users, alloc], minlength=self.n_arms)
        return float(np.sum(self.sat(sums)) + np.sum(self.linear_weights[users, alloc]))


def greedy_allocate(inst: WelfareInstance, order=None) -> tuple[np.ndarray, float]:
    """Assign users one at a time to the arm with the largest marginal gain.

    Users are visited in index order unless ``order`` gives a permutation.
    When some linear weight is negative, gains are floored at zero before
    the comparison so the choice sees a monotone objective; the returned
    objective is always the untruncated value. Ties go to the lowest arm.
    """
    n, k = inst.values.shape
    alloc = np.zeros(n, dtype=np.intp)
    sums = np.zeros(k)
    truncate = not inst.monotone
    r = inst.sat
    base = r(sums)
    users = range(n) if order is None else order
    for i in users:
        cand = r(sums + inst.values[i])
        gain = cand - base + inst.linear_weights[i]
        if truncate:
            gain = np.maximum(gain, 0.0)
        a = int(np.argmax(gain))
        alloc[i] = a
        sums[a] += inst.values[i, a]
        base[a] = cand[a]
    return alloc, inst.objective(alloc)


def brute_force_allocate(inst: WelfareInstance) -> tuple[np.ndarray, float]:
    """Exact maximizer by enumeration of all K^N allocations.

    Among equal objectives the lexicographically smallest assignment wins.
    """
    n, k = inst.values.shape
    if k**n > MAX_ENUMERATION:
        raise SizeError(f"{k}^{n} allocations exceed the enumeration limit {MAX_ENUMERATION}")
    if n == 0:
        alloc = np.zeros(0, dtype=np.intp)
        return alloc, inst.objective(alloc)
    # itertools.product yields assignments in lexicographic order
    allocs = np.array(list(itertools.product(range(k), repeat=n)), dtype=np.intp)
    users = np.arange(n)
    picked_v = inst.values[users, allocs]
    picked_w = inst.linear_weights[users, allocs].sum(axis=1)
    sums = np.zeros((allocs.shape[0], k))
    for a in range(k):
        sums[:, a] = np.where(allocs == a, picked_v, 0.0).sum(axis=1)
    totals = inst.sat(sums).sum(axis=1) + picked_w
    best = allocs[int(np.argmax(totals))]
    return best.copy(), inst.objective(best)

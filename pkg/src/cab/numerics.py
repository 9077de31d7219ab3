"""Small dense positive-definite linear algebra and seeded random streams."""
from __future__ import annotations

import zlib

import numpy as np
from scipy.linalg import cholesky, solve_triangular, LinAlgError

from .errors import DimensionError, NumericalError


class PsdMatrix:
    """Symmetric positive-definite d x d matrix with a lazily cached Cholesky factor.

    Usually built as ``lambda0 * I`` and grown with rank-one updates.
    """

    def __init__(self, matrix):
        matrix = np.array(matrix, dtype=float)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise DimensionError(f"expected a square matrix, got shape {matrix.shape}")
        self._m = matrix
        self._chol = None

    @classmethod
    def scaled_identity(cls, dim: int, scale: float) -> "PsdMatrix":
        return cls(scale * np.eye(dim))

    @property
    def dim(self) -> int:
        return self._m.shape[0]

    @property
    def matrix(self) -> np.ndarray:
        return self._m

    def copy(self) -> "PsdMatrix":
        return PsdMatrix(self._m)

    def rank_one_add(self, x) -> None:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise DimensionError(f"vector has shape {x.shape}, expected ({self.dim},)")
        self._m += np.outer(x, x)
        self._chol = None

    def add_outer_products(self, xs) -> None:
        """Add sum_j x_j x_j^T for the rows of ``xs``; same result as repeated rank_one_add."""
        xs = np.atleast_2d(np.asarray(xs, dtype=float))
        if xs.shape[1] != self.dim:
            raise DimensionError(f"rows have length {xs.shape[1]}, expected {self.dim}")
        self._m += xs.T @ xs
        self._chol = None

    def cholesky(self) -> np.ndarray:
        """Lower-triangular L with L L^T equal to the matrix."""
        if self._chol is None:
            try:
                self._chol = cholesky(self._m, lower=True, check_finite=True)
            except (LinAlgError, ValueError) as exc:
                raise NumericalError(f"matrix is not positive definite: {exc}") from exc
        return self._chol


def mahalanobis_inv_norm(v: PsdMatrix, x) -> np.ndarray | float:
    """sqrt(x^T V^{-1} x) via a triangular solve; ``x`` may be a batch of shape (..., d)."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != v.dim:
        raise DimensionError(f"vector length {x.shape[-1]} does not match matrix dim {v.dim}")
    flat = x.reshape(-1, v.dim)
    u = solve_triangular(v.cholesky(), flat.T, lower=True)
    out = np.sqrt(np.einsum("ij,ij->j", u, u)).reshape(x.shape[:-1])
    return float(out) if out.ndim == 0 else out


def sample_scaled_inverse_gaussian(h: PsdMatrix, scale: float, rng: np.random.Generator, size: int | None = None):
    """Draw from N(0, scale^2 H^{-1}) as scale * L^{-T} z with L L^T = H.

    With ``size`` the result has shape (size, d), one independent draw per row.
    """
    chol = h.cholesky()
    n = 1 if size is None else size
    z = rng.standard_normal((n, h.dim))
    u = solve_triangular(chol, z.T, lower=True, trans="T").T
    out = scale * u
    return out[0] if size is None else out


def _tag_key(tag) -> int:
    if isinstance(tag, (int, np.integer)):
        return int(tag)
    return zlib.crc32(str(tag).encode("utf-8"))


def derive_rng(seed: int, *tags) -> np.random.Generator:
    """Independent PCG64 stream for ``seed`` and a role path such as ("policy", "cab-ucb")."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(_tag_key(t) for t in tags))
    return np.random.Generator(np.random.PCG64(ss))

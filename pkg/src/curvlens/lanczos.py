"""m-step Lanczos with full reorthogonalization, Ritz pairs and convergence bounds."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import eigh_tridiagonal

BREAKDOWN_REL_TOL = 1e-12


@dataclass(frozen=True)
class Tridiagonal:
    """Jacobi matrix from the Lanczos recurrence: diagonal alphas, off-diagonal betas."""

    alphas: np.ndarray
    betas: np.ndarray

    def __post_init__(self):
        alphas = np.asarray(self.alphas, dtype=np.float64)
        betas = np.asarray(self.betas, dtype=np.float64)
        if betas.shape != (max(len(alphas) - 1, 0),):
            raise ValueError("betas must have length len(alphas) - 1")
        object.__setattr__(self, "alphas", alphas)
        object.__setattr__(self, "betas", betas)

    @property
    def steps(self):
        return len(self.alphas)

    def dense(self):
        t = np.diag(self.alphas)
        if self.steps > 1:
            t += np.diag(self.betas, 1) + np.diag(self.betas, -1)
        return t


@dataclass(frozen=True)
class RitzDecomposition:
    """Ritz values (ascending), quadrature weights and optional Ritz vectors."""

    values: np.ndarray
    weights: np.ndarray
    steps: int
    vectors: Optional[np.ndarray] = None
    seed_kind: str = ""

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        weights = np.asarray(self.weights, dtype=np.float64)
        if values.shape != weights.shape:
            raise ValueError("values and weights must have matching shapes")
        if abs(weights.sum() - 1.0) > 1e-10:
            raise ValueError(f"quadrature weights must sum to 1, got {weights.sum()}")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "weights", weights)

    @property
    def lambda_max(self):
        return float(self.values[-1])


def lanczos_run(op, steps, seed, reorthogonalize=True):
    """Run m-step Lanczos on ``op`` from the (nonzero) seed vector.

    Returns the tridiagonal recurrence matrix and the Krylov basis V with
    unit-norm columns.  Declares breakdown and truncates when the new
    off-diagonal beta underflows below 1e-12 times the running coefficient
    scale (identity-like operators legitimately terminate early).
    """
    if not 1 <= steps <= op.dim:
        raise ValueError(f"steps must be in [1, {op.dim}], got {steps}")
    seed = np.asarray(seed, dtype=np.float64)
    seed_norm = np.linalg.norm(seed)
    if seed_norm == 0.0:
        raise ValueError("Lanczos seed vector must be nonzero")

    v = seed / seed_norm
    v_old = np.zeros_like(v)
    basis = np.zeros((op.dim, steps))
    basis[:, 0] = v
    alphas = np.zeros(steps)
    betas = np.zeros(max(steps - 1, 0))
    beta = 0.0
    scale = 0.0
    completed = 0

    for j in range(steps):
        w = op.matvec(v) - beta * v_old
        if not np.all(np.isfinite(w)):
            raise FloatingPointError("NaN/Inf in operator output during Lanczos")
        alpha = w @ v
        w = w - alpha * v
        if reorthogonalize:
            # two-pass classical Gram-Schmidt against all stored columns
            active = basis[:, : j + 1]
            w -= active @ (active.T @ w)
            w -= active @ (active.T @ w)
        alphas[j] = alpha
        scale = max(scale, abs(alpha), abs(beta))
        completed = j + 1
        if j == steps - 1:
            break
        beta = np.linalg.norm(w)
        if beta < BREAKDOWN_REL_TOL * max(scale, 1e-300):
            break
        betas[j] = beta
        v_old = v
        v = w / beta
        basis[:, j + 1] = v

    tridiagonal = Tridiagonal(alphas=alphas[:completed], betas=betas[: completed - 1])
    return tridiagonal, basis[:, :completed]


def ritz_decompose(tridiagonal, basis=None, seed_kind=""):
    """Eigen-decompose the Lanczos tridiagonal into Ritz values and weights.

    The quadrature weight of each node is the squared first component of
    the corresponding normalized eigenvector; Ritz vectors are the basis
    columns combined by those eigenvectors when the basis is retained.
    """
    if tridiagonal.steps == 1:
        values = tridiagonal.alphas.copy()
        eigvecs = np.ones((1, 1))
    else:
        values, eigvecs = eigh_tridiagonal(tridiagonal.alphas, tridiagonal.betas)
    weights = eigvecs[0, :] ** 2
    weights = weights / weights.sum()
    vectors = None if basis is None else basis @ eigvecs
    return RitzDecomposition(
        values=values, weights=weights, steps=tridiagonal.steps,
        vectors=vectors, seed_kind=seed_kind,
    )


def moment_match_check(op, decomposition, seed, order):
    """Relative mismatch between the quadrature moment and v^T H^k v.

    Gauss quadrature is exact up to degree 2m-1; higher orders are refused.
    """
    m = decomposition.steps
    if order > 2 * m - 1:
        raise ValueError(f"order {order} outside Gauss exactness degree {2 * m - 1}")
    if order < 0:
        raise ValueError("order must be nonnegative")
    seed = np.asarray(seed, dtype=np.float64)
    v = seed / np.linalg.norm(seed)
    quad = float(np.sum(decomposition.weights * decomposition.values ** order))
    hk_v = v.copy()
    for _ in range(order):
        hk_v = op.matvec(hk_v)
    direct = float(v @ hk_v)
    return abs(quad - direct) / max(1.0, abs(direct))


def _chebyshev_t(k, x):
    """Chebyshev polynomial of the first kind, stable for |x| >= 1."""
    if abs(x) <= 1.0:
        return float(np.cos(k * np.arccos(x)))
    s = 1.0 if x > 0 else (-1.0) ** k
    return s * float(np.cosh(k * np.arccosh(abs(x))))


def chebyshev_bound_ratio(gap, steps):
    """Lanczos vs power-iteration error-bound pair (L, R) for a spectral gap.

    Convention: second eigenvalue 1, smallest 0, so the gap parameter is
    rho = gap - 1.  L = 1 / T_{m-1}(1 + 2 rho)^2 and R = (1/gap)^{2(m-1)}.
    """
    if gap <= 1.0:
        raise ValueError("gap (lambda1/lambda2) must exceed 1")
    if steps < 2:
        raise ValueError("steps must be >= 2")
    rho = gap - 1.0
    lanczos_bound = 1.0 / _chebyshev_t(steps - 1, 1.0 + 2.0 * rho) ** 2
    power_bound = (1.0 / gap) ** (2 * (steps - 1))
    return lanczos_bound, power_bound

"""Symmetric-operator abstraction, dense oracle and deterministic probe vectors."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

ORACLE_DIM_CAP = 4000


@dataclass(frozen=True)
class SymmetricOperator:
    """A dimension-``dim`` symmetric linear map exposed only through matvecs.

    ``apply`` must be deterministic and symmetric; immutable after
    construction, so instances are safe to share between concurrent
    read-only callers.
    """

    dim: int
    apply: Callable[[np.ndarray], np.ndarray]
    label: str = ""

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError(f"operator dimension must be positive, got {self.dim}")

    def matvec(self, v):
        v = np.asarray(v, dtype=np.float64)
        if v.shape != (self.dim,):
            raise ValueError(f"expected vector of shape ({self.dim},), got {v.shape}")
        out = np.asarray(self.apply(v), dtype=np.float64)
        if not np.all(np.isfinite(out)):
            raise FloatingPointError(f"operator '{self.label}' produced non-finite output")
        return out


@dataclass(frozen=True)
class DenseSymmetric:
    """Dense symmetric matrix, the brute-force oracle representation."""

    entries: np.ndarray

    def __post_init__(self):
        entries = np.asarray(self.entries, dtype=np.float64)
        if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
            raise ValueError(f"entries must be square, got shape {entries.shape}")
        if not np.array_equal(entries, entries.T):
            raise ValueError("entries must be exactly symmetric")
        object.__setattr__(self, "entries", entries)

    @property
    def dim(self):
        return self.entries.shape[0]

    def as_operator(self, label="dense"):
        entries = self.entries
        return SymmetricOperator(dim=self.dim, apply=lambda v: entries @ v, label=label)


@dataclass
class SeedStream:
    """Deterministic random-vector source; identical seed gives identical draws.

    Single-owner mutable state: do not share one stream between concurrent
    consumers, spawn child streams instead.
    """

    seed: int
    _rng: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        self._rng = np.random.default_rng(np.uint64(self.seed))

    @property
    def generator(self):
        return self._rng

    def spawn(self, offset):
        """Independent child stream, deterministic in (seed, offset)."""
        return SeedStream(seed=(int(self.seed) * 1_000_003 + int(offset)) % 2**64)


def probe_vector(stream, dim, kind="rademacher"):
    """Draw one i.i.d. zero-mean unit-variance probe vector.

    ``kind`` is ``rademacher`` (entries in {-1, +1}, fourth moment 1) or
    ``gaussian`` (standard normal, fourth moment 3).
    """
    if dim < 1:
        raise ValueError("probe dimension must be >= 1")
    rng = stream.generator
    if kind == "rademacher":
        return rng.integers(0, 2, size=dim).astype(np.float64) * 2.0 - 1.0
    if kind == "gaussian":
        return rng.standard_normal(dim)
    raise ValueError(f"unknown probe kind {kind!r}")


def dense_eigendecomposition(matrix):
    """Full eigendecomposition of a DenseSymmetric, eigenvalues ascending.

    Brute-force O(P^3) oracle; capped at P <= 4000.
    """
    if matrix.dim > ORACLE_DIM_CAP:
        raise ValueError(f"oracle eigendecomposition capped at P={ORACLE_DIM_CAP}, got {matrix.dim}")
    try:
        eigenvalues, eigenvectors = np.linalg.eigh(matrix.entries)
    except np.linalg.LinAlgError as exc:
        raise RuntimeError(f"eigendecomposition failed to converge: {exc}") from exc
    return eigenvalues, eigenvectors


def apply_shifted(op, mu, negate=False):
    """Operator acting as v -> (+/-)Hv + mu*v, same dimension as ``op``."""
    sign = -1.0 if negate else 1.0
    label = f"{'-' if negate else ''}{op.label or 'H'}{f'+{mu}I' if mu else ''}"
    return SymmetricOperator(
        dim=op.dim,
        apply=lambda v, _op=op: sign * _op.matvec(v) + mu * v,
        label=label,
    )


def symmetry_defect(op, stream, n_probes=5):
    """Max |u^T(Hv) - v^T(Hu)| / (|u||v| |H|_est) over random probe pairs.

    Cheap randomized certificate that ``op`` really is symmetric.
    """
    worst = 0.0
    for _ in range(n_probes):
        u = probe_vector(stream, op.dim, "gaussian")
        v = probe_vector(stream, op.dim, "gaussian")
        hu = op.matvec(u)
        hv = op.matvec(v)
        norm_est = max(np.linalg.norm(hu) / np.linalg.norm(u),
                       np.linalg.norm(hv) / np.linalg.norm(v), 1e-300)
        defect = abs(u @ hv - v @ hu) / (np.linalg.norm(u) * np.linalg.norm(v) * norm_est)
        worst = max(worst, defect)
    return worst

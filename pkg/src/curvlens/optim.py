"""Spectrally tuned SGD/SGDM, Lanczos-Newton directions and loss-landscape traversal."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from curvlens.bulk import bulk_mean_random_vector, bulk_median_gradient
from curvlens.density import DiracMixture
from curvlens.lanczos import lanczos_run, ritz_decompose
from curvlens.models import curvature_operator, lipschitz_bounds_logreg
from curvlens.operators import probe_vector

DIVERGENCE_LOSS = 1e10

SPECTRAL_VARIANTS = ("ssgd", "ssgdm")
FIXED_VARIANTS = ("sgd_fixed", "sgdm_fixed")
THEORETICAL_VARIANTS = ("sgd_theoretical", "sgdm_theoretical")
ALL_VARIANTS = SPECTRAL_VARIANTS + FIXED_VARIANTS + THEORETICAL_VARIANTS


@dataclass(frozen=True)
class SpectralSchedule:
    """Learning-rate/momentum pair and where it came from."""

    alpha: float
    beta: float
    source: str

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError("learning rate must be positive")
        if not 0.0 <= self.beta < 1.0:
            raise ValueError("momentum must lie in [0, 1)")


@dataclass(frozen=True)
class TrainConfig:
    """Knobs for the training loop and its periodic spectral refreshes."""

    batch_size: int
    total_steps: int
    lanczos_steps: int = 30
    refresh_interval: int = 100
    curvature: str = "ggn"
    layers: int = 1
    seed_kind: str = "random"
    fixed_alpha: float = 0.01
    fixed_beta: float = 0.9

    def __post_init__(self):
        if self.refresh_interval < 1:
            raise ValueError("refresh interval must be >= 1")
        if self.lanczos_steps < 3:
            raise ValueError("need at least 3 Lanczos steps")


@dataclass
class TrainTrace:
    """Per-step losses plus the schedule/spectrum record at each refresh."""

    losses: List[float] = field(default_factory=list)
    refreshes: List[Tuple[int, float, float, float, float]] = field(default_factory=list)
    schedule_per_step: List[Tuple[float, float]] = field(default_factory=list)
    diverged: bool = False
    warnings: List[str] = field(default_factory=list)

    @property
    def final_loss(self):
        return self.losses[-1] if self.losses else float("nan")


@dataclass(frozen=True)
class LossLandscape:
    """Loss grids along Ritz directions: rows are directions, columns distances."""

    direction_indices: Tuple[int, ...]
    eigenvalues: Tuple[float, ...]
    distances: np.ndarray
    train_losses: np.ndarray
    test_losses: Optional[np.ndarray] = None


def ssgd_schedule(lambda_max, lambda_bulk):
    """alpha = 2 / (lambda_max + lambda_b), no momentum."""
    _check_spectrum_pair(lambda_max, lambda_bulk)
    return SpectralSchedule(alpha=2.0 / (lambda_max + lambda_bulk), beta=0.0, source="ssgd")


def ssgdm_schedule(lambda_max, lambda_bulk):
    """Heavy-ball optimum for a spectrum in [lambda_b, lambda_max]:
    alpha = (2 / (sqrt(lambda_max) + sqrt(lambda_b)))^2 and
    beta = ((sqrt(lambda_max) - sqrt(lambda_b)) / (sqrt(lambda_max) + sqrt(lambda_b)))^2.
    """
    _check_spectrum_pair(lambda_max, lambda_bulk)
    root_top = np.sqrt(lambda_max)
    root_bulk = np.sqrt(lambda_bulk)
    alpha = (2.0 / (root_top + root_bulk)) ** 2
    beta = ((root_top - root_bulk) / (root_top + root_bulk)) ** 2
    return SpectralSchedule(alpha=alpha, beta=beta, source="ssgdm")


def theoretical_schedule(lipschitz, strong_convexity, with_momentum=False):
    """Same formulas fed the analytic (L, mu) bounds instead of measured spectra."""
    _check_spectrum_pair(lipschitz, strong_convexity)
    if with_momentum:
        inner = ssgdm_schedule(lipschitz, strong_convexity)
    else:
        inner = ssgd_schedule(lipschitz, strong_convexity)
    return SpectralSchedule(alpha=inner.alpha, beta=inner.beta, source="theoretical")


def _check_spectrum_pair(top, bottom):
    if bottom <= 0:
        raise ValueError("lower spectral bound must be positive")
    if top < bottom:
        raise ValueError("upper spectral bound must dominate the lower one")


def spectral_refresh(model, batch, config, stream, variant="ssgd"):
    """Measure (lambda_max, lambda_b) on the positive-definite surrogate and
    derive the schedule for the requested variant.

    Random seeds give the weighted bulk mean; gradient seeds carry no
    quadrature weights so the bulk median is used instead.  A bulk estimate
    exceeding lambda_max is clamped (degenerate bulk), with a warning string
    returned for the caller's trace.
    """
    if config.curvature not in ("ggn", "abs_hessian"):
        raise ValueError("spectral refresh requires a positive-definite curvature kind")
    op = curvature_operator(model, batch, kind=config.curvature)
    steps = min(config.lanczos_steps, op.dim)
    if config.seed_kind == "gradient":
        _, seed = model.loss_and_gradient(batch)
        if np.linalg.norm(seed) == 0.0:
            seed = probe_vector(stream, op.dim, "rademacher")
    else:
        seed = probe_vector(stream, op.dim, "rademacher")
    tri, basis = lanczos_run(op, steps, seed)
    ritz = ritz_decompose(tri, basis, seed_kind=config.seed_kind)
    lambda_max = ritz.lambda_max

    if config.seed_kind == "gradient":
        estimate = bulk_median_gradient(ritz.values, config.layers)
    else:
        mixture = DiracMixture.from_arrays(ritz.values, ritz.weights, steps=ritz.steps)
        estimate = bulk_mean_random_vector(mixture, config.layers)
    lambda_bulk = estimate.bulk_mean
    warning = None
    if lambda_bulk >= lambda_max:
        warning = f"bulk estimate {lambda_bulk:.6g} >= lambda_max {lambda_max:.6g}; clamped"
        lambda_bulk = lambda_max

    schedule = ssgdm_schedule(lambda_max, lambda_bulk) if variant == "ssgdm" \
        else ssgd_schedule(lambda_max, lambda_bulk)
    return lambda_max, lambda_bulk, schedule, warning


def train(model, dataset, config, variant, stream):
    """Heavy-ball training loop p <- p - alpha g + beta (p - p_prev).

    Spectral variants refresh (alpha, beta) every ``refresh_interval``
    steps; fixed variants use the configured constants; theoretical
    variants use the analytic logistic (L, mu) bounds.  Divergence (loss
    above 1e10) truncates the trace with a flag rather than raising.
    """
    if variant not in ALL_VARIANTS:
        raise ValueError(f"unknown training variant {variant!r}")
    trace = TrainTrace()
    rng = stream.generator
    n = dataset.n_samples
    full_batch = config.batch_size >= n

    if variant in FIXED_VARIANTS:
        beta = config.fixed_beta if variant == "sgdm_fixed" else 0.0
        schedule = SpectralSchedule(alpha=config.fixed_alpha, beta=beta, source="fixed")
    elif variant in THEORETICAL_VARIANTS:
        lipschitz, mu = lipschitz_bounds_logreg(dataset, model.weight_decay)
        schedule = theoretical_schedule(lipschitz, mu, with_momentum=variant == "sgdm_theoretical")
    else:
        schedule = None  # set at the first refresh

    params = model.get_params()
    params_prev = params.copy()
    for step in range(config.total_steps):
        if full_batch:
            batch = dataset
        else:
            batch = dataset.batch(rng.choice(n, size=config.batch_size, replace=False))
        if variant in SPECTRAL_VARIANTS and step % config.refresh_interval == 0:
            lam_max, lam_bulk, schedule, warning = spectral_refresh(
                model, batch, config, stream, variant=variant)
            trace.refreshes.append((step, lam_max, lam_bulk, schedule.alpha, schedule.beta))
            if warning:
                trace.warnings.append(f"step {step}: {warning}")
        try:
            loss, grad = model.loss_and_gradient(batch)
        except FloatingPointError:
            trace.diverged = True
            break
        trace.losses.append(loss)
        trace.schedule_per_step.append((schedule.alpha, schedule.beta))
        if loss > DIVERGENCE_LOSS or not np.isfinite(loss):
            trace.diverged = True
            break
        new_params = params - schedule.alpha * grad + schedule.beta * (params - params_prev)
        params_prev = params
        params = new_params
        model.set_params(params)
    return trace


def lanczos_newton_direction(ritz, gradient, damping):
    """Damped Newton direction from the Ritz pairs.

    Within the Ritz subspace each component is scaled by 1/(theta_i + delta);
    the orthogonal complement, where no curvature was measured, is scaled
    by 1/delta (trust-region damping semantics).
    """
    if ritz.vectors is None:
        raise ValueError("Ritz vectors were not retained; re-run Lanczos with the basis")
    if damping <= 0:
        raise ValueError("damping must be positive")
    gradient = np.asarray(gradient, dtype=np.float64)
    coeffs = ritz.vectors.T @ gradient
    in_span = ritz.vectors @ (coeffs / (ritz.values + damping))
    residual = gradient - ritz.vectors @ coeffs
    return in_span + residual / damping


def loss_landscape(model, dataset, ritz, dist, n_points, n_directions=6, test_dataset=None):
    """Evaluate the loss along Ritz directions over a symmetric distance grid.

    Takes the ``n_directions`` largest and smallest Ritz directions; the
    grid has an odd point count so the unperturbed loss sits at t = 0.
    """
    if ritz.vectors is None:
        raise ValueError("Ritz vectors were not retained; re-run Lanczos with the basis")
    if n_points % 2 == 0:
        raise ValueError("n_points must be odd so t = 0 is on the grid")
    m = len(ritz.values)
    k = min(n_directions, (m + 1) // 2)
    indices = sorted(set(range(k)) | set(range(m - k, m)))
    distances = np.linspace(-dist, dist, n_points)
    base = model.get_params()
    train_losses = np.empty((len(indices), n_points))
    test_losses = np.empty((len(indices), n_points)) if test_dataset is not None else None
    for row, idx in enumerate(indices):
        direction = ritz.vectors[:, idx]
        for col, t in enumerate(distances):
            point = base if t == 0.0 else base + t * direction
            train_losses[row, col] = model.loss(dataset, params=point)
            if test_losses is not None:
                test_losses[row, col] = model.loss(test_dataset, params=point)
    return LossLandscape(
        direction_indices=tuple(indices),
        eigenvalues=tuple(float(ritz.values[i]) for i in indices),
        distances=distances,
        train_losses=train_losses,
        test_losses=test_losses,
    )

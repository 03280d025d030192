"""Sampling of observational and interventional datasets, and random models."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Dict, Iterable, Optional

import numpy as np
from scipy.linalg import solve_triangular

from .cumulants import CumulantTensor4
from .errors import (
    DimensionMismatchError,
    GenerationError,
    InsufficientSamplesError,
    InterventionIndexError,
    MissingInterventionError,
    ModelValidationError,
)
from .model import (
    DEFAULT_FAITHFULNESS_MIN,
    DEFAULT_RANK_TOL,
    SemIcaModel,
    intervened_matrices,
    reduced_mixing,
    response_matrix,
    total_effects,
    validate_model,
)
from .types import OBSERVATIONAL, Intervention, LatentFamily, LatentSpec

logger = logging.getLogger(__name__)

DEFAULT_MAX_REGENERATION = 100
DEFAULT_INTERVENTION_SCALE = 10.0


def derive_seed(seed: int, *keys: int) -> int:
    """Derive an independent integer seed from ``seed`` and a path of keys."""
    # The key count leads so that (s,) and (s, 0) stay distinct.
    sequence = np.random.SeedSequence([int(seed), len(keys), *(int(k) for k in keys)])
    return int(sequence.generate_state(1)[0])


@dataclass(frozen=True)
class Dataset:
    """N x n samples tagged with the intervention that produced them."""

    samples: np.ndarray
    intervention: Intervention = OBSERVATIONAL
    seed: int = 0
    centered: bool = False

    def __post_init__(self) -> None:
        samples = np.array(self.samples, dtype=float, copy=True)
        if samples.ndim != 2:
            raise DimensionMismatchError("dataset samples", "N x n matrix", samples.shape)
        if samples.shape[0] < 1:
            raise InsufficientSamplesError(1, samples.shape[0])
        target = self.intervention.target
        if target is not None and target >= samples.shape[1]:
            raise InterventionIndexError(target, samples.shape[1])
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)

    @property
    def N(self) -> int:
        return self.samples.shape[0]

    @property
    def n(self) -> int:
        return self.samples.shape[1]

    @property
    def target(self) -> Optional[int]:
        return self.intervention.target

    def describe(self) -> str:
        if self.intervention.is_observational:
            return f"observational (N={self.N})"
        return f"Do(x{self.target}={self.intervention.value:g}) (N={self.N})"


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------


def sample_latents(spec: LatentSpec, m: int, N: int, seed: int) -> np.ndarray:
    """Draw an N x m matrix of i.i.d. latents with the family's configured mean and variance."""
    if N < 1:
        raise InsufficientSamplesError(1, N)
    rng = np.random.default_rng(seed)
    std = np.sqrt(spec.variance)
    if spec.family == LatentFamily.LAPLACE:
        # Laplace(b) has variance 2 b^2.
        return rng.laplace(loc=spec.mean, scale=std / np.sqrt(2.0), size=(N, m))
    if spec.family == LatentFamily.RADEMACHER:
        signs = 2.0 * rng.integers(0, 2, size=(N, m)) - 1.0
        return spec.mean + std * signs
    return spec.mean + std * np.sqrt(3.0) * rng.uniform(-1.0, 1.0, size=(N, m))


def _propagated_noise(B: np.ndarray, N: int, noise_std: float, seed: int, clamp: Optional[int] = None) -> np.ndarray:
    """Rows of (I - B)^{-1} eps with eps ~ N(0, noise_std^2 I)."""
    n = B.shape[0]
    if noise_std == 0:
        return np.zeros((N, n))
    rng = np.random.default_rng(seed)
    eps = rng.normal(0.0, noise_std, size=(N, n))
    if clamp is not None:
        eps[:, clamp] = 0.0
    return solve_triangular(np.eye(n) - B, eps.T, lower=True, unit_diagonal=True).T


def sample_observational(model: SemIcaModel, N: int, seed: int) -> Dataset:
    """Rows are C h + (I - B)^{-1} eps."""
    C = reduced_mixing(model)
    H = sample_latents(model.latent, model.m, N, derive_seed(seed, 0))
    X = H @ C.T + _propagated_noise(model.B, N, model.noise_std, derive_seed(seed, 1))
    logger.debug(f"Drew {N} observational samples (seed={seed})")
    return Dataset(samples=X, intervention=OBSERVATIONAL, seed=seed)


def sample_interventional(model: SemIcaModel, iv: Intervention, N: int, seed: int) -> Dataset:
    """Rows are D_i h + lambda (I - B_i)^{-1} e_i + (I - B_i)^{-1} eps_i."""
    if iv.is_observational:
        raise MissingInterventionError("sample_interventional needs an intervention target; use sample_observational")
    i = iv.target
    if i >= model.n:
        raise InterventionIndexError(i, model.n)
    _, B_i = intervened_matrices(model, i)
    D_i = response_matrix(model, i)
    unit = np.zeros(model.n)
    unit[i] = 1.0
    shift = iv.value * solve_triangular(np.eye(model.n) - B_i, unit, lower=True, unit_diagonal=True)

    H = sample_latents(model.latent, model.m, N, derive_seed(seed, 0))
    Y = H @ D_i.T + shift[None, :]
    Y += _propagated_noise(B_i, N, model.noise_std, derive_seed(seed, 1), clamp=i)
    Y[:, i] = iv.value
    logger.debug(f"Drew {N} samples under Do(x{i}={iv.value:g}) (seed={seed})")
    return Dataset(samples=Y, intervention=iv, seed=seed)


def observational_moments(model: SemIcaModel) -> tuple[np.ndarray, np.ndarray]:
    """Analytic mean and covariance of X."""
    C = reduced_mixing(model)
    G = total_effects(model)
    mean = C @ np.full(model.m, model.latent.mean)
    cov = model.latent.variance * C @ C.T + model.noise_std**2 * G @ G.T
    return mean, cov


def default_intervention_value(
    model: SemIcaModel, i: int, scale: float = DEFAULT_INTERVENTION_SCALE
) -> float:
    """Clamp value ``scale`` observational standard deviations above the mean of X_i."""
    if not 0 <= i < model.n:
        raise InterventionIndexError(i, model.n)
    mean, cov = observational_moments(model)
    std = float(np.sqrt(max(cov[i, i], 0.0)))
    return float(mean[i] + scale * (std if std > 0 else 1.0))


# ---------------------------------------------------------------------------
# Model generation
# ---------------------------------------------------------------------------


def _signed_weights(rng: np.random.Generator, shape: tuple[int, ...], lo: float, hi: float) -> np.ndarray:
    magnitude = rng.uniform(lo, hi, size=shape)
    sign = np.where(rng.random(size=shape) < 0.5, -1.0, 1.0)
    return magnitude * sign


def random_model(
    n: int,
    m: int,
    seed: int,
    edge_prob: float = 0.5,
    weight_lo: float = 0.5,
    weight_hi: float = 1.0,
    *,
    noise_std: float = 0.0,
    latent: Optional[LatentSpec] = None,
    rank_tol: float = DEFAULT_RANK_TOL,
    faithfulness_min: Optional[float] = None,
    max_regeneration: int = DEFAULT_MAX_REGENERATION,
) -> SemIcaModel:
    """Random canonical model whose draws are regenerated until it validates.

    Args:
        n: Observed variables.
        m: Latent sources, at most ``n``.
        seed: Every draw derives from this seed.
        edge_prob: Probability of each below-diagonal edge of B.
        weight_lo: Smallest absolute edge or mixing weight.
        weight_hi: Largest absolute edge or mixing weight.
        noise_std: Per-variable Gaussian noise.
        latent: Latent law; Laplace with mean 1 when omitted.
        rank_tol: Relative singular value floor for the rank checks.
        faithfulness_min: Smallest allowed nonzero |entry| of A and B; defaults
            to the lesser of the library floor and ``weight_lo``.
        max_regeneration: Draws attempted before giving up.

    Returns:
        A validated SemIcaModel in causal order.

    Raises:
        ModelValidationError: The arguments themselves are inconsistent.
        GenerationError: No valid model within ``max_regeneration`` draws.
    """
    if m > n:
        raise ModelValidationError(f"m exceeds n ({m} > {n})")
    if not 0 < weight_lo < weight_hi:
        raise ModelValidationError(f"need 0 < weight_lo < weight_hi (got {weight_lo}, {weight_hi})")
    if not 0 <= edge_prob <= 1:
        raise ModelValidationError(f"edge_prob must lie in [0, 1] (got {edge_prob})")
    if faithfulness_min is None:
        faithfulness_min = min(DEFAULT_FAITHFULNESS_MIN, weight_lo)

    rng = np.random.default_rng(seed)
    latent = latent or LatentSpec()
    violations: list[str] = []
    for attempt in range(1, max_regeneration + 1):
        edges = np.tril(rng.random((n, n)) < edge_prob, k=-1)
        B = np.where(edges, _signed_weights(rng, (n, n), weight_lo, weight_hi), 0.0)
        A = _signed_weights(rng, (n, m), weight_lo, weight_hi)
        model = SemIcaModel(A=A, B=B, noise_std=noise_std, latent=latent)
        report = validate_model(model, rank_tol=rank_tol, faithfulness_min=faithfulness_min)
        if report.valid:
            logger.debug(f"random_model(n={n}, m={m}, seed={seed}) accepted on attempt {attempt}")
            return model
        violations = report.violations
        logger.debug(f"random_model attempt {attempt} rejected: {report.summary()}")
    raise GenerationError(max_regeneration, violations)


# ---------------------------------------------------------------------------
# Exact moments
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PopulationMoments:
    """Exact second and fourth order statistics of a model and its interventions."""

    C: np.ndarray
    D: Dict[int, np.ndarray]
    kappa: np.ndarray
    sigma: np.ndarray
    M4_obs: CumulantTensor4
    M4_int: Dict[int, CumulantTensor4]


def population_moments(model: SemIcaModel, targets: Optional[Iterable[int]] = None) -> PopulationMoments:
    """Population C, D_i, kappa, covariance and cumulants (noise has no 4th cumulant)."""
    targets = list(range(model.n)) if targets is None else [int(t) for t in targets]
    for t in targets:
        if not 0 <= t < model.n:
            raise InterventionIndexError(t, model.n)
    scale = np.sqrt(model.latent.variance)
    C = reduced_mixing(model) * scale
    D = {t: response_matrix(model, t) * scale for t in targets}
    _, sigma = observational_moments(model)
    # Columns carry the latent scale, so the per-component weight is plain kappa.
    kappa = np.full(model.m, model.latent.kappa)
    return PopulationMoments(
        C=C,
        D=D,
        kappa=kappa,
        sigma=sigma,
        M4_obs=CumulantTensor4.rank_one_sum(C, kappa),
        M4_int={t: CumulantTensor4.rank_one_sum(D[t], kappa) for t in targets},
    )

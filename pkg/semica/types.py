"""Configuration, report and document models for semica.

Numerical containers (models, datasets, tensors, results) are frozen
dataclasses next to the operations that produce them. Everything that is
configured by a user, persisted to disk or reported back lives here as a
pydantic model.
"""
from __future__ import annotations

import math
from enum import Enum
from typing import Dict, List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


# ---------------------------------------------------------------------------
# Model-core value types
# ---------------------------------------------------------------------------


class LatentFamily(str, Enum):
    LAPLACE = "Laplace"
    RADEMACHER = "Rademacher"
    UNIFORM = "Uniform"


# Excess kurtosis of each family after standardisation.
_FAMILY_KAPPA: Dict[LatentFamily, float] = {
    LatentFamily.LAPLACE: 3.0,
    LatentFamily.RADEMACHER: -2.0,
    LatentFamily.UNIFORM: -1.2,
}


class LatentSpec(BaseModel):
    """Distribution of each independent latent confounder."""

    family: LatentFamily = LatentFamily.LAPLACE
    mean: float = 1.0
    variance: float = 1.0

    model_config = ConfigDict(frozen=True)

    @field_validator("variance")
    @classmethod
    def _positive_variance(cls, value: float) -> float:
        if not value > 0:
            raise ValueError("variance must be positive")
        return value

    @property
    def kappa(self) -> float:
        """Excess kurtosis implied by the family (scale free)."""
        return _FAMILY_KAPPA[self.family]


class Intervention(BaseModel):
    """Hard intervention Do(X_target = value); ``target=None`` is observational."""

    target: Optional[int] = Field(default=None, ge=0)
    value: Optional[float] = None

    model_config = ConfigDict(frozen=True)

    @model_validator(mode="after")
    def _paired(self) -> "Intervention":
        if (self.target is None) != (self.value is None):
            raise ValueError("target and value must both be set or both be None")
        if self.value is not None and not math.isfinite(self.value):
            raise ValueError("intervention value must be finite")
        return self

    @classmethod
    def observational(cls) -> "Intervention":
        return cls()

    @property
    def is_observational(self) -> bool:
        return self.target is None


OBSERVATIONAL = Intervention()


class ValidationReport(BaseModel):
    """Outcome of checking a model against its structural assumptions."""

    violations: List[str] = Field(default_factory=list)

    @property
    def valid(self) -> bool:
        return not self.violations

    def summary(self) -> str:
        return "valid" if self.valid else "; ".join(self.violations)


# ---------------------------------------------------------------------------
# Estimation options
# ---------------------------------------------------------------------------


class DecompositionOptions(BaseModel):
    """Knobs for the robust tensor power method and its whitening step."""

    model_config = ConfigDict(extra="forbid")

    n_inits: int = Field(default=30, ge=1, description="Random initialisations per component (L)")
    max_iter: int = Field(default=200, ge=1)
    tol: float = Field(default=1e-10, gt=0)
    seed: int = 0
    noise_var: float = Field(default=0.0, ge=0, description="Isotropic noise variance removed before whitening")
    eig_floor: float = Field(default=1e-10, gt=0, description="Relative eigenvalue floor for whitening")


class RefineOptions(BaseModel):
    """Block-coordinate descent settings for the joint refinement."""

    model_config = ConfigDict(extra="forbid")

    max_cycles: int = Field(default=100, ge=0)
    stop_tol: float = Field(default=1e-9, ge=0, description="Relative decrease below which refinement stops")
    max_halvings: int = Field(default=20, ge=0)
    initial_step: float = Field(default=1.0, gt=0)
    slack: float = Field(default=1e-12, ge=0, description="Allowed objective increase before a solver fault")


class RecoveryOptions(BaseModel):
    """Settings for the end-to-end recovery pipeline."""

    model_config = ConfigDict(extra="forbid")

    targets: Optional[List[int]] = Field(
        default=None, description="Intervened variables to use; None means every supplied dataset"
    )
    threshold_z: float = Field(default=6.0, gt=0)
    align_mode: Literal["auto", "exact", "greedy"] = "auto"
    exact_limit: int = Field(default=7, ge=1)
    tie_ratio: float = Field(
        default=4.0, gt=1, description="Runner-up alignment residual within this factor of the best is flagged"
    )
    response_route: Literal["auto", "ica", "anchored"] = "auto"
    triangular_tol: Optional[float] = Field(
        default=None, gt=0, description="Above-diagonal tolerance; None picks 1e-3 (noisy) or 1e-8 (exact)"
    )
    g_floor: float = Field(default=1e-8, gt=0)
    restarts: int = Field(default=20, ge=1)
    restart_jitter: float = Field(default=0.05, ge=0)
    kappa: Optional[float] = Field(default=None, description="Known latent excess kurtosis, if any")
    seed: int = 0
    decomposition: DecompositionOptions = Field(default_factory=DecompositionOptions)
    refine: RefineOptions = Field(default_factory=RefineOptions)

    @field_validator("kappa")
    @classmethod
    def _nonzero_kappa(cls, value: Optional[float]) -> Optional[float]:
        if value is not None and value == 0:
            raise ValueError("kappa must be non-zero (Gaussian latents are not identifiable)")
        return value


class RecoveryMetrics(BaseModel):
    """Errors of a recovery against the ground-truth model."""

    mse_B: float
    mse_A: float
    order_correct: bool
    max_row_error_A: float = 0.0


# ---------------------------------------------------------------------------
# Experiments
# ---------------------------------------------------------------------------


class ExperimentConfig(BaseModel):
    """One simulation study: a grid of sample sizes and seeds for one (n, m)."""

    model_config = ConfigDict(extra="forbid")

    n: int = Field(default=3, ge=1)
    m: int = Field(default=3, ge=1)
    N_grid: List[int] = Field(default_factory=lambda: [1_000, 10_000, 100_000])
    seeds: List[int] = Field(default_factory=lambda: [0, 1, 2, 3, 4])
    noise_std: float = Field(default=math.sqrt(1e-3), ge=0)
    latent: LatentSpec = Field(default_factory=LatentSpec)
    restarts: int = Field(default=20, ge=1)
    targets: Optional[List[int]] = None
    m_assumed: Optional[int] = Field(default=None, ge=1)
    output_path: str = "sweep.csv"
    edge_prob: float = Field(default=0.5, ge=0, le=1)
    weight_lo: float = Field(default=0.5, gt=0)
    weight_hi: float = Field(default=1.0, gt=0)
    intervention_scale: float = Field(default=10.0, gt=0)
    exact_moments: bool = False
    jobs: int = Field(default=1, ge=1)
    sizes: Optional[List[int]] = Field(default=None, description="Target-subset sizes for ablate-interventions")
    m_assumed_grid: Optional[List[int]] = Field(default=None, description="Assumed latent counts for ablate-latents")
    recovery: RecoveryOptions = Field(default_factory=RecoveryOptions)

    @model_validator(mode="after")
    def _check(self) -> "ExperimentConfig":
        if not self.N_grid:
            raise ValueError("N_grid must not be empty")
        if any(b <= a for a, b in zip(self.N_grid, self.N_grid[1:])):
            raise ValueError("N_grid must be strictly ascending")
        if self.N_grid[0] < 2:
            raise ValueError("every sample size must be at least 2")
        if not self.seeds:
            raise ValueError("seeds must not be empty")
        if self.m > self.n:
            raise ValueError(f"m exceeds n ({self.m} > {self.n})")
        if self.m_assumed is not None and self.m_assumed > self.n:
            raise ValueError(f"m_assumed exceeds n ({self.m_assumed} > {self.n})")
        if self.targets is not None:
            bad = [t for t in self.targets if not 0 <= t < self.n]
            if bad:
                raise ValueError(f"targets out of range 0..{self.n - 1}: {bad}")
            if len(set(self.targets)) != len(self.targets):
                raise ValueError("targets must be distinct")
        if self.sizes is not None and any(not 0 <= s <= self.n for s in self.sizes):
            raise ValueError(f"sizes must lie in 0..{self.n}")
        if self.m_assumed_grid is not None and any(not 1 <= k <= self.n for k in self.m_assumed_grid):
            raise ValueError(f"m_assumed_grid entries must lie in 1..{self.n}")
        if self.weight_hi <= self.weight_lo:
            raise ValueError("weight_hi must exceed weight_lo")
        return self

    @property
    def effective_m(self) -> int:
        return self.m_assumed if self.m_assumed is not None else self.m

    @property
    def effective_targets(self) -> List[int]:
        return list(self.targets) if self.targets is not None else list(range(self.n))


SWEEP_COLUMNS = [
    "n",
    "m",
    "N",
    "seed",
    "targets",
    "m_assumed",
    "mse_B",
    "mse_A",
    "order_correct",
    "objective_final",
    "error",
    "wall_ms",
]


class SweepRow(BaseModel):
    """One (N, seed) cell of an experiment table."""

    n: int
    m: int
    N: int
    seed: int
    targets: int
    m_assumed: int
    mse_B: float = math.nan
    mse_A: float = math.nan
    order_correct: Optional[bool] = None
    objective_final: float = math.nan
    error: str = ""
    wall_ms: float = 0.0


# ---------------------------------------------------------------------------
# Persisted documents
# ---------------------------------------------------------------------------


class ModelDocument(BaseModel):
    """On-disk form of a SemIcaModel."""

    n: int
    m: int
    A: List[List[float]]
    B: List[List[float]]
    noise_std: float = 0.0
    latent: LatentSpec = Field(default_factory=LatentSpec)
    ordering: Optional[List[int]] = None


class DatasetSidecar(BaseModel):
    """Metadata written next to a dataset CSV."""

    intervention_target: Optional[int] = None
    value: Optional[float] = None
    seed: int
    N: int

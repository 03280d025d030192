"""SEM-ICA: causal discovery with latent confounders from interventional data."""
from __future__ import annotations

__version__ = "0.1.0"

from .cumulants import (
    CumulantTensor4,
    Whitener,
    center,
    empirical_covariance,
    empirical_cumulant4,
    excess_kurtosis,
    whiten,
    whiten_cumulant,
)
from .decomposition import (
    CpFactors,
    decompose_moments,
    decompose_symmetric4,
    model_cumulant,
    power_step,
    recover_ica_mixing,
)
from .errors import SemIcaError
from .model import (
    ColumnAlignment,
    SemIcaModel,
    apply_alignment,
    intervened_matrices,
    reduced_mixing,
    response_matrix,
    total_effects,
    validate_model,
)
from .ordering import EffectMatrix, causal_order, detect_affected, order_from_effects
from .alignment import AlignmentFit, align_columns, fit_alignments
from .identification import assemble_ab, rank1_differences
from .refine import RefineState, joint_objective, joint_refine
from .pipeline import RecoveryResult, evaluate, recover_exact, recover_from_responses, recover_pipeline
from .simulator import (
    Dataset,
    default_intervention_value,
    derive_seed,
    population_moments,
    random_model,
    sample_interventional,
    sample_latents,
    sample_observational,
)
from .types import (
    DecompositionOptions,
    ExperimentConfig,
    Intervention,
    LatentFamily,
    LatentSpec,
    RecoveryMetrics,
    RecoveryOptions,
    RefineOptions,
    ValidationReport,
)

__all__ = [
    "AlignmentFit",
    "ColumnAlignment",
    "CpFactors",
    "CumulantTensor4",
    "Dataset",
    "DecompositionOptions",
    "EffectMatrix",
    "ExperimentConfig",
    "Intervention",
    "LatentFamily",
    "LatentSpec",
    "RecoveryMetrics",
    "RecoveryOptions",
    "RecoveryResult",
    "RefineOptions",
    "RefineState",
    "SemIcaError",
    "SemIcaModel",
    "ValidationReport",
    "Whitener",
    "align_columns",
    "fit_alignments",
    "apply_alignment",
    "assemble_ab",
    "causal_order",
    "center",
    "decompose_moments",
    "decompose_symmetric4",
    "default_intervention_value",
    "derive_seed",
    "detect_affected",
    "empirical_covariance",
    "empirical_cumulant4",
    "evaluate",
    "excess_kurtosis",
    "intervened_matrices",
    "joint_objective",
    "joint_refine",
    "model_cumulant",
    "order_from_effects",
    "population_moments",
    "power_step",
    "random_model",
    "rank1_differences",
    "recover_exact",
    "recover_from_responses",
    "recover_ica_mixing",
    "recover_pipeline",
    "reduced_mixing",
    "response_matrix",
    "sample_interventional",
    "sample_latents",
    "sample_observational",
    "total_effects",
    "validate_model",
    "whiten",
    "whiten_cumulant",
    "__version__",
]

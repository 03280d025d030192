"""SEM-ICA model algebra.

The structural system is ``X = A H + B X + N`` with ``B`` stored strictly
lower triangular (the canonical causal order). A hard intervention on
variable ``i`` zeroes row ``i`` of both ``A`` and ``B``; this keeps
``I - B_i`` unit lower triangular, so every inverse below is a forward
substitution.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import networkx as nx
import numpy as np
from scipy.linalg import solve_triangular

from .errors import DimensionMismatchError, InterventionIndexError, ModelValidationError
from .types import LatentSpec, ValidationReport

logger = logging.getLogger(__name__)

DEFAULT_RANK_TOL = 1e-8
DEFAULT_FAITHFULNESS_MIN = 0.1


def _frozen(array: np.ndarray) -> np.ndarray:
    out = np.array(array, dtype=float, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class SemIcaModel:
    """Ground truth (A, B, noise, latent law) of a linear SEM with confounders."""

    A: np.ndarray
    B: np.ndarray
    noise_std: float = 0.0
    latent: LatentSpec = field(default_factory=LatentSpec)
    # ordering[k] is the original label of canonical variable k (set by from_dag).
    ordering: Optional[Tuple[int, ...]] = None

    def __post_init__(self) -> None:
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        B = np.atleast_2d(np.asarray(self.B, dtype=float))
        if A.ndim != 2 or B.ndim != 2:
            raise DimensionMismatchError("model matrices", "2-D arrays", f"A{A.shape}, B{B.shape}")
        if B.shape != (A.shape[0], A.shape[0]):
            raise DimensionMismatchError("B shape", (A.shape[0], A.shape[0]), B.shape)
        if self.noise_std < 0:
            raise ModelValidationError("noise_std must be nonnegative")
        object.__setattr__(self, "A", _frozen(A))
        object.__setattr__(self, "B", _frozen(B))
        if self.ordering is not None:
            object.__setattr__(self, "ordering", tuple(int(k) for k in self.ordering))

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.A.shape[1]

    @classmethod
    def from_dag(
        cls,
        A: np.ndarray,
        B: np.ndarray,
        *,
        noise_std: float = 0.0,
        latent: Optional[LatentSpec] = None,
    ) -> "SemIcaModel":
        """Permute an arbitrary DAG into canonical strictly-lower form.

        ``B[j, k] != 0`` is the edge k -> j. Ties in the topological order are
        broken by the smaller original index.
        """
        A = np.asarray(A, dtype=float)
        B = np.asarray(B, dtype=float)
        n = B.shape[0]
        if np.any(np.diag(B) != 0):
            raise ModelValidationError("B must have a zero diagonal (no self-loops)")
        graph = nx.DiGraph()
        graph.add_nodes_from(range(n))
        graph.add_edges_from((int(k), int(j)) for j, k in zip(*np.nonzero(B)))
        if not nx.is_directed_acyclic_graph(graph):
            cycle = [edge[0] for edge in nx.find_cycle(graph)]
            raise ModelValidationError("B is cyclic", [f"cycle through {cycle}"])
        order = list(nx.lexicographical_topological_sort(graph))
        logger.debug(f"Canonical order for DAG input: {order}")
        return cls(
            A=A[order],
            B=B[np.ix_(order, order)],
            noise_std=noise_std,
            latent=latent or LatentSpec(),
            ordering=tuple(order),
        )


@dataclass(frozen=True)
class ColumnAlignment:
    """Permutation, sign and scale fixing the PS indeterminacy of one matrix."""

    perm: Tuple[int, ...]
    signs: np.ndarray
    scales: np.ndarray

    def __post_init__(self) -> None:
        perm = tuple(int(p) for p in self.perm)
        m = len(perm)
        if sorted(perm) != list(range(m)):
            raise ModelValidationError(f"perm {perm} is not a bijection of 0..{m - 1}")
        signs = np.asarray(self.signs, dtype=float).reshape(-1)
        scales = np.asarray(self.scales, dtype=float).reshape(-1)
        if signs.shape != (m,) or scales.shape != (m,):
            raise DimensionMismatchError("alignment vectors", m, f"signs {signs.shape}, scales {scales.shape}")
        if not np.all(np.abs(signs) == 1):
            raise ModelValidationError("signs must be +1 or -1")
        if not np.all(scales > 0):
            raise ModelValidationError("scales must be strictly positive")
        object.__setattr__(self, "perm", perm)
        object.__setattr__(self, "signs", _frozen(signs))
        object.__setattr__(self, "scales", _frozen(scales))

    @property
    def m(self) -> int:
        return len(self.perm)

    @classmethod
    def identity(cls, m: int) -> "ColumnAlignment":
        return cls(perm=tuple(range(m)), signs=np.ones(m), scales=np.ones(m))

    @property
    def is_identity(self) -> bool:
        return self.perm == tuple(range(self.m)) and bool(np.all(self.signs == 1) and np.all(self.scales == 1))


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------


def validate_model(
    model: SemIcaModel,
    rank_tol: float = DEFAULT_RANK_TOL,
    faithfulness_min: float = DEFAULT_FAITHFULNESS_MIN,
) -> ValidationReport:
    """List every violated structural assumption; never raises."""
    violations: list[str] = []
    n, m = model.n, model.m
    A, B = model.A, model.B

    if m > n:
        violations.append(f"m exceeds n ({m} > {n})")
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(B))):
        violations.append("non-finite entries in A or B")
    else:
        sv = np.linalg.svd(A, compute_uv=False)
        if sv.size == 0 or sv[0] == 0 or sv[-1] <= rank_tol * sv[0] or m > n:
            smallest = float(sv[-1]) if sv.size else 0.0
            violations.append(
                f"A is rank deficient (smallest singular value {smallest:.3g} "
                f"<= {rank_tol:.1g} x largest)"
            )

    if np.any(np.diag(B) != 0):
        violations.append("B has a nonzero diagonal")
    upper = np.triu(B, k=1)
    if np.any(upper != 0):
        rows, cols = np.nonzero(upper)
        entries = ", ".join(f"({r}, {c})" for r, c in zip(rows[:5], cols[:5]))
        violations.append(f"B is not strictly lower triangular (canonical DAG form); entries above diagonal at {entries}")

    for name, matrix in (("A", A), ("B", B)):
        weak = (matrix != 0) & (np.abs(matrix) < faithfulness_min)
        if np.any(weak):
            count = int(weak.sum())
            violations.append(
                f"faithfulness: {count} nonzero entr{'y' if count == 1 else 'ies'} of {name} "
                f"below {faithfulness_min:g} in magnitude"
            )

    if model.latent.variance != 1.0:
        violations.append(f"latent variance must be 1 (got {model.latent.variance:g})")
    return ValidationReport(violations=violations)


def _check_lower(B: np.ndarray) -> None:
    if np.any(np.triu(B) != 0):
        raise ModelValidationError("I - B is not unit lower triangular; B must be strictly lower triangular")


def _unit_lower_solve(B: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    _check_lower(B)
    L = np.eye(B.shape[0]) - B
    return solve_triangular(L, rhs, lower=True, unit_diagonal=True)


def reduced_mixing(model: SemIcaModel) -> np.ndarray:
    """C = (I - B)^{-1} A by forward substitution."""
    return _unit_lower_solve(model.B, model.A)


def total_effects(model: SemIcaModel) -> np.ndarray:
    """G = (I - B)^{-1}; column i holds the total effects of variable i."""
    return _unit_lower_solve(model.B, np.eye(model.n))


def _check_index(i: int, n: int) -> int:
    if not isinstance(i, (int, np.integer)) or not 0 <= i < n:
        raise InterventionIndexError(int(i) if isinstance(i, (int, np.integer)) else -1, n)
    return int(i)


def intervene_rows(A: np.ndarray, B: np.ndarray, i: int) -> Tuple[np.ndarray, np.ndarray]:
    """Row-zeroed copies of (A, B) for Do(X_i)."""
    i = _check_index(i, A.shape[0])
    A_i = np.array(A, dtype=float, copy=True)
    B_i = np.array(B, dtype=float, copy=True)
    A_i[i, :] = 0.0
    B_i[i, :] = 0.0
    return A_i, B_i


def intervened_matrices(model: SemIcaModel, i: int) -> Tuple[np.ndarray, np.ndarray]:
    """(A_i, B_i): the model's matrices after Do(X_i = lambda)."""
    return intervene_rows(model.A, model.B, i)


def response_matrix(model: SemIcaModel, i: int) -> np.ndarray:
    """D_i = (I - B_i)^{-1} A_i; row i is exactly zero."""
    A_i, B_i = intervened_matrices(model, i)
    D_i = _unit_lower_solve(B_i, A_i)
    D_i[i, :] = 0.0
    return D_i


def apply_alignment(M: np.ndarray, alignment: ColumnAlignment) -> np.ndarray:
    """Column j of the result is signs[j] * scales[j] * M[:, perm[j]]."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[1] != alignment.m:
        raise DimensionMismatchError("alignment columns", alignment.m, M.shape)
    return M[:, list(alignment.perm)] * (alignment.signs * alignment.scales)[None, :]


def canonical_rows(model: SemIcaModel, values: Sequence[float]) -> np.ndarray:
    """Reorder per-variable values given in original labels into canonical order."""
    values = np.asarray(values, dtype=float)
    if model.ordering is None:
        return values
    return values[list(model.ordering)]

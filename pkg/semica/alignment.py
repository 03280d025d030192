"""Resolving the permutation/sign ambiguity between C and each response matrix.

For the right alignment C - D_i is rank one. The exact search minimises
sigma_2(C - D_i P S)^2 over every signed permutation; the greedy search
matches columns by absolute cosine. When the response matrix has nearly
parallel columns two alignments can score almost alike; the runner-up is
kept so callers can flag that, and a reference response (from the
interventional mean shift) can be added to the residual to separate them.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import List, Literal, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import AlignmentAmbiguityError, DimensionMismatchError
from .model import ColumnAlignment, apply_alignment

logger = logging.getLogger(__name__)

AMBIGUITY_ANGLE = 1e-12
DEFAULT_EXACT_LIMIT = 7
DEFAULT_TIE_RATIO = 4.0

AlignMode = Literal["auto", "exact", "greedy"]


def _cosines(C: np.ndarray, D: np.ndarray) -> np.ndarray:
    """cos[j, k] between column j of C and column k of D (0 for zero columns)."""
    nc = np.linalg.norm(C, axis=0)
    nd = np.linalg.norm(D, axis=0)
    denom = np.outer(nc, nd)
    dots = C.T @ D
    return np.divide(dots, denom, out=np.zeros_like(dots), where=denom > 0)


def check_ambiguity(D: np.ndarray, min_angle: float = AMBIGUITY_ANGLE) -> None:
    """Raise if two nonzero columns of D are parallel up to sign."""
    norms = np.linalg.norm(D, axis=0)
    m = D.shape[1]
    for a in range(m):
        for b in range(a + 1, m):
            if norms[a] == 0 or norms[b] == 0:
                continue
            u, v = D[:, a] / norms[a], D[:, b] / norms[b]
            dot = float(u @ v)
            angle = float(np.arctan2(np.linalg.norm(v - dot * u), abs(dot)))
            if angle < min_angle:
                raise AlignmentAmbiguityError(a, b, angle)


def _second_singular_sq(F: np.ndarray) -> float:
    if F.shape[1] < 2 or F.shape[0] < 2:
        return 0.0
    s = np.linalg.svd(F, compute_uv=False)
    return float(s[1] ** 2)


@dataclass(frozen=True)
class AlignmentFit:
    """An alignment with its residual and the residual of the best competing one."""

    alignment: ColumnAlignment
    residual: float
    runner_up: float = float("inf")

    def is_tie(self, ratio: float = DEFAULT_TIE_RATIO) -> bool:
        """True when the runner-up residual is within ``ratio`` times the winner's."""
        return self.runner_up <= ratio * self.residual


def _align_exact(C: np.ndarray, D: np.ndarray, reference: Optional[np.ndarray] = None) -> AlignmentFit:
    """Exhaustive signed-permutation search with a branch-and-bound cut.

    The residual is sigma_2(C - D P S)^2, plus ||D P S - reference||_F^2 when a
    reference response is given. Both terms only grow as columns are added,
    so a partial assignment already worse than the runner-up is dropped
    without changing the two smallest residuals. Ties go to the larger sum of
    signed cosines. Zero columns of D are interchangeable, so only the first
    unused one is tried, with sign +1.
    """
    n, m = C.shape
    cos = _cosines(C if reference is None else reference, D)
    nonzero = np.linalg.norm(D, axis=0) > 0
    top: List[Tuple[float, float, Tuple[int, ...], np.ndarray]] = []
    F = np.zeros((n, m))
    perm = [0] * m
    signs = np.ones(m)
    used = [False] * m

    def cutoff() -> float:
        return top[-1][0] if len(top) == 2 else np.inf

    def visit(j: int, score: float, offset: float) -> None:
        if j == m:
            entry = (_second_singular_sq(F) + offset, -score, tuple(perm), signs.copy())
            top.append(entry)
            top.sort(key=lambda item: (item[0], item[1]))
            del top[2:]
            return
        free = [k for k in range(m) if not used[k]]
        spare = [k for k in free if not nonzero[k]][:1]
        candidates = [(s * cos[j, k], k, s) for k in free if nonzero[k] for s in (1.0, -1.0)]
        candidates += [(0.0, k, 1.0) for k in spare]
        candidates.sort(key=lambda item: -item[0])
        for gain, k, s in candidates:
            column = s * D[:, k]
            F[:, j] = C[:, j] - column
            extra = 0.0 if reference is None else float(np.sum((column - reference[:, j]) ** 2))
            if _second_singular_sq(F[:, : j + 1]) + offset + extra > cutoff():
                continue
            used[k] = True
            perm[j], signs[j] = k, s
            visit(j + 1, score + gain, offset + extra)
            used[k] = False
        F[:, j] = 0.0

    visit(0, 0.0, 0.0)
    residual, _, best_perm, best_signs = top[0]
    # One column leaves sigma_2 blind; the sign then rests on the cosine alone.
    runner_up = top[1][0] if len(top) > 1 and (m > 1 or reference is not None) else float("inf")
    logger.debug(f"Exact alignment perm={best_perm} residual={residual:.3g} runner-up={runner_up:.3g}")
    return AlignmentFit(ColumnAlignment(perm=best_perm, signs=best_signs, scales=np.ones(m)), residual, runner_up)


def _align_greedy(C: np.ndarray, D: np.ndarray, reference: Optional[np.ndarray] = None) -> AlignmentFit:
    """Hungarian matching on |cos|, against the reference response when one is given."""
    target = C if reference is None else reference
    cos = _cosines(target, D)
    rows, cols = linear_sum_assignment(-np.abs(cos))
    m = C.shape[1]
    perm = np.empty(m, dtype=int)
    perm[rows] = cols
    signs = np.where(cos[np.arange(m), perm] < 0, -1.0, 1.0)
    scales = np.ones(m)
    for j, k in enumerate(perm):
        dd = float(D[:, k] @ D[:, k])
        proj = abs(float(target[:, j] @ D[:, k]))
        if dd > 0 and proj > 0:
            scales[j] = proj / dd
    alignment = ColumnAlignment(perm=tuple(int(k) for k in perm), signs=signs, scales=scales)
    return AlignmentFit(alignment, _second_singular_sq(C - apply_alignment(D, alignment)))


def fit_alignments(
    C_hat: np.ndarray,
    D_hats: Sequence[np.ndarray],
    mode: AlignMode = "auto",
    exact_limit: int = DEFAULT_EXACT_LIMIT,
    references: Optional[Sequence[Optional[np.ndarray]]] = None,
) -> List[AlignmentFit]:
    """Align every response matrix onto C_hat and report how clear each choice was.

    Args:
        C_hat: Reduced mixing estimate, shape (n, m).
        D_hats: Response matrices with columns in arbitrary order, sign and scale.
        mode: "exact" (signed permutations, unit scales), "greedy" (Hungarian
            matching with free scales) or "auto" (exact up to ``exact_limit`` columns).
        exact_limit: Largest m searched exhaustively under "auto".
        references: Optional per-matrix responses already in C_hat's column
            order, e.g. from the interventional mean shift. They join the
            residual in exact mode and replace C_hat as the match target in
            greedy mode.

    Returns:
        One AlignmentFit per response matrix, in input order.

    Raises:
        AlignmentAmbiguityError: Two columns of a response matrix are parallel.
        DimensionMismatchError: A response or reference does not match C_hat's shape.
    """
    C_hat = np.asarray(C_hat, dtype=float)
    n, m = C_hat.shape
    if mode == "auto":
        mode = "exact" if m <= exact_limit else "greedy"
    if mode not in ("exact", "greedy"):
        raise ValueError(f"Unknown alignment mode: {mode}")
    references = list(references) if references is not None else [None] * len(D_hats)
    if len(references) != len(D_hats):
        raise DimensionMismatchError("reference count", len(D_hats), len(references))

    fits = []
    for index, (D, reference) in enumerate(zip(D_hats, references)):
        D = np.asarray(D, dtype=float)
        if D.shape != (n, m):
            raise DimensionMismatchError(f"response matrix #{index} shape", (n, m), D.shape)
        if reference is not None:
            reference = np.asarray(reference, dtype=float)
            if reference.shape != (n, m):
                raise DimensionMismatchError(f"reference #{index} shape", (n, m), reference.shape)
        check_ambiguity(D)
        fits.append(_align_exact(C_hat, D, reference) if mode == "exact" else _align_greedy(C_hat, D, reference))
    return fits


def align_columns(
    C_hat: np.ndarray,
    D_hats: Sequence[np.ndarray],
    mode: AlignMode = "auto",
    exact_limit: int = DEFAULT_EXACT_LIMIT,
) -> List[ColumnAlignment]:
    """One alignment per response matrix, mapping its columns onto C_hat's."""
    return [fit.alignment for fit in fit_alignments(C_hat, D_hats, mode, exact_limit)]

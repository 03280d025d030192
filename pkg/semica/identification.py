"""Rank-1 identification of (A, B) from C and the aligned response matrices.

C - D_i = g_i a_i^T where g_i is column i of G = (I - B)^{-1} (so g_i[i] = 1)
and a_i is row i of C. Collecting every g_i gives G, hence B = I - G^{-1}
and A = G^{-1} C.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import solve_triangular

from .errors import DimensionMismatchError, NormalizationError, SolverFaultError, TriangularityError

logger = logging.getLogger(__name__)

DEFAULT_G_FLOOR = 1e-8
NOISY_TRIANGULAR_TOL = 1e-3
EXACT_TRIANGULAR_TOL = 1e-8


@dataclass(frozen=True)
class RankOneFactor:
    target: int
    g: np.ndarray
    a: np.ndarray
    ratio: float


@dataclass(frozen=True)
class Assembly:
    """Assembled estimates in the data's own coordinates."""

    A_hat: np.ndarray
    B_hat: np.ndarray
    G_hat: np.ndarray
    unidentified: Tuple[int, ...] = ()
    clamped: Tuple[Tuple[int, int, float], ...] = ()
    flags: List[str] = field(default_factory=list)


def rank1_factor(C_hat: np.ndarray, D_hat: np.ndarray, target: int, g_floor: float = DEFAULT_G_FLOOR) -> RankOneFactor:
    """Leading SVD term of C_hat - D_hat, pinned so that g[target] = 1.

    Args:
        C_hat: Observational mixing estimate.
        D_hat: Response matrix for ``target``, already aligned to C_hat.
        target: The intervened variable.
        g_floor: Smallest usable |u[target]| before pinning.

    Returns:
        g (column ``target`` of the total-effect matrix), a (row ``target``
        of C) and the ratio of the second to the first singular value.

    Raises:
        NormalizationError: The difference vanishes or barely touches ``target``.
    """
    F = np.asarray(C_hat, dtype=float) - np.asarray(D_hat, dtype=float)
    U, s, Vt = np.linalg.svd(F, full_matrices=False)
    if s.size == 0 or s[0] == 0:
        raise NormalizationError(target, 0.0, g_floor)
    u, v = U[:, 0], Vt[0]
    pivot = float(u[target])
    if abs(pivot) < g_floor:
        raise NormalizationError(target, abs(pivot), g_floor)
    ratio = float(s[1] / s[0]) if s.size > 1 else 0.0
    return RankOneFactor(target=target, g=u / pivot, a=s[0] * v * pivot, ratio=ratio)


def rank1_differences(
    C_hat: np.ndarray,
    aligned_D_hats: Sequence[np.ndarray],
    targets: Optional[Sequence[int]] = None,
    g_floor: float = DEFAULT_G_FLOOR,
) -> List[RankOneFactor]:
    """One rank-1 factor per aligned response matrix."""
    C_hat = np.asarray(C_hat, dtype=float)
    targets = list(range(len(aligned_D_hats))) if targets is None else list(targets)
    if len(targets) != len(aligned_D_hats):
        raise DimensionMismatchError("targets per response matrix", len(aligned_D_hats), len(targets))
    factors = []
    for target, D in zip(targets, aligned_D_hats):
        if np.shape(D) != C_hat.shape:
            raise DimensionMismatchError(f"response matrix for x{target}", C_hat.shape, np.shape(D))
        factor = rank1_factor(C_hat, D, target, g_floor)
        logger.debug(f"x{target}: rank-1 ratio {factor.ratio:.3g}")
        factors.append(factor)
    return factors


def assemble_ab(
    g_list: Sequence[Optional[np.ndarray]],
    C_hat: np.ndarray,
    order: Sequence[int],
    triangular_tol: float = NOISY_TRIANGULAR_TOL,
    strict: bool = False,
) -> Assembly:
    """Build G column-wise, enforce unit lower triangularity in causal order, solve for (A, B).

    ``g_list[i] is None`` leaves column i of G at e_i and marks x_i unidentified.
    Above-diagonal entries up to ``triangular_tol`` are dropped; larger ones
    raise in strict mode and are dropped with a flag otherwise.
    """
    C_hat = np.asarray(C_hat, dtype=float)
    n = C_hat.shape[0]
    order = [int(k) for k in order]
    if len(g_list) != n:
        raise DimensionMismatchError("g vectors", n, len(g_list))
    if sorted(order) != list(range(n)):
        raise DimensionMismatchError("causal order", f"permutation of 0..{n - 1}", order)

    G = np.eye(n)
    unidentified = []
    for i, g in enumerate(g_list):
        if g is None:
            unidentified.append(i)
            continue
        g = np.asarray(g, dtype=float)
        if g.shape != (n,):
            raise DimensionMismatchError(f"g vector for x{i}", n, g.shape)
        G[:, i] = g
        G[i, i] = 1.0

    flags: List[str] = []
    if unidentified:
        flags.append(f"unidentified columns (no usable intervention): {unidentified}")
        logger.warning(f"Total-effect columns {unidentified} default to unit vectors")

    Gp = G[np.ix_(order, order)]
    rows, cols = np.nonzero(np.abs(np.triu(Gp, k=1)) > triangular_tol)
    clamped = tuple((order[r], order[c], float(Gp[r, c])) for r, c in zip(rows, cols))
    if clamped:
        if strict:
            raise TriangularityError(clamped, triangular_tol)
        flags.append(f"{len(clamped)} above-diagonal total effects clamped to 0")
        logger.warning(f"Clamped {len(clamped)} total effects that contradict the causal order")
    Gp = np.tril(Gp)

    Gp_inv = solve_triangular(Gp, np.eye(n), lower=True, unit_diagonal=True)
    if not np.all(np.isfinite(Gp_inv)):
        raise SolverFaultError("Assembled total-effect matrix is not invertible")
    Bp = np.tril(np.eye(n) - Gp_inv, k=-1)

    B_hat = np.zeros((n, n))
    B_hat[np.ix_(order, order)] = Bp
    A_hat = np.zeros_like(C_hat)
    A_hat[order] = Gp_inv @ C_hat[order]
    G_hat = np.zeros((n, n))
    G_hat[np.ix_(order, order)] = Gp
    return Assembly(
        A_hat=A_hat,
        B_hat=B_hat,
        G_hat=G_hat,
        unidentified=tuple(unidentified),
        clamped=clamped,
        flags=flags,
    )

"""Symmetric 4th-order tensor decomposition and ICA mixing recovery.

Components are found one at a time by the tensor power iteration
``v <- T(., v, v, v) / ||T(., v, v, v)||`` from a batch of starts, then
deflated. On a whitened cumulant the components are orthonormal, which is
what makes the power iteration converge.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy.linalg import eigh

from .cumulants import (
    CumulantTensor4,
    center,
    empirical_covariance,
    empirical_cumulant4,
    whiten,
    whiten_cumulant,
)
from .errors import DegenerateDirectionError, DimensionMismatchError
from .simulator import Dataset
from .types import DecompositionOptions

logger = logging.getLogger(__name__)

DEGENERATE_NORM = 1e-14


@dataclass(frozen=True)
class CpFactors:
    """Weighted rank-1 terms: T ~ sum_j weights[j] * columns[:, j]^{(x)4}."""

    weights: np.ndarray
    columns: np.ndarray
    converged: np.ndarray
    residual: float
    # Weights at unit latent variance; None when the tensor was not whitened.
    whitened_weights: Optional[np.ndarray] = None

    @property
    def m(self) -> int:
        return self.columns.shape[1]

    @property
    def all_converged(self) -> bool:
        return bool(np.all(self.converged))

    def natural_columns(self) -> np.ndarray:
        """Columns rescaled to unit latent variance."""
        if self.whitened_weights is None:
            return self.columns.copy()
        ratio = np.ones(self.m)
        usable = np.abs(self.whitened_weights) > 0
        ratio[usable] = np.abs(self.weights[usable]) / np.abs(self.whitened_weights[usable])
        return self.columns * ratio**0.25


def canonical_signs(columns: np.ndarray) -> np.ndarray:
    """Flip each column so its largest-magnitude entry is positive."""
    columns = np.array(columns, dtype=float, copy=True)
    if columns.size == 0:
        return columns
    pivots = np.argmax(np.abs(columns), axis=0)
    signs = np.sign(columns[pivots, np.arange(columns.shape[1])])
    signs[signs == 0] = 1.0
    return columns * signs


def power_step(T: CumulantTensor4, v: np.ndarray) -> Tuple[np.ndarray, float]:
    """One power update; the new vector keeps a nonnegative overlap with v."""
    v = np.asarray(v, dtype=float)
    norm_v = float(np.linalg.norm(v))
    if abs(norm_v - 1.0) > 1e-8:
        raise ValueError(f"power_step needs a unit vector (norm {norm_v:.6g})")
    u = T.contract3(v)
    norm = float(np.linalg.norm(u))
    if norm < DEGENERATE_NORM:
        raise DegenerateDirectionError(norm)
    lam = float(u @ v)
    v_new = u / norm
    if v_new @ v < 0:
        v_new = -v_new
    return v_new, lam


def _spectral_start(dense: np.ndarray) -> np.ndarray:
    """Leading eigenvector of the leading eigenmatrix of the k^2 x k^2 unfolding."""
    k = dense.shape[0]
    unfolded = dense.reshape(k * k, k * k)
    values, vectors = eigh((unfolded + unfolded.T) / 2.0)
    top = vectors[:, np.argmax(np.abs(values))].reshape(k, k)
    values, vectors = eigh((top + top.T) / 2.0)
    return vectors[:, np.argmax(np.abs(values))]


def _batch_power(dense: np.ndarray, V: np.ndarray, max_iter: int, tol: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Run power iterations on every row of V until each converges or stalls."""
    V = V.copy()
    converged = np.zeros(len(V), dtype=bool)
    degenerate = np.zeros(len(V), dtype=bool)
    for _ in range(max_iter):
        active = ~(converged | degenerate)
        if not active.any():
            break
        Va = V[active]
        U = np.einsum("ijkl,bj,bk,bl->bi", dense, Va, Va, Va, optimize=True)
        norms = np.linalg.norm(U, axis=1)
        collapsed = norms < DEGENERATE_NORM
        safe = np.where(collapsed, 1.0, norms)
        V_new = np.where(collapsed[:, None], Va, U / safe[:, None])
        flip = np.sum(V_new * Va, axis=1) < 0
        V_new[flip] = -V_new[flip]
        step = np.linalg.norm(V_new - Va, axis=1)

        idx = np.flatnonzero(active)
        V[idx] = V_new
        degenerate[idx[collapsed]] = True
        converged[idx[~collapsed & (step < tol)]] = True

    U = np.einsum("ijkl,bj,bk,bl->bi", dense, V, V, V, optimize=True)
    lam = np.sum(U * V, axis=1)
    degenerate |= np.linalg.norm(U, axis=1) < DEGENERATE_NORM
    return V, lam, converged & ~degenerate, degenerate


def decompose_symmetric4(
    T: CumulantTensor4,
    m: int,
    L: int = 30,
    max_iter: int = 200,
    tol: float = 1e-10,
    seed: int = 0,
) -> CpFactors:
    """Robust tensor power method with deflation and L random + 1 spectral starts.

    Args:
        T: Symmetric tensor, usually a whitened fourth cumulant.
        m: Components to extract.
        L: Random starts per component.
        max_iter: Power iterations per start.
        tol: Stop once successive iterates differ by less than this.
        seed: Seeds the random starts.

    Returns:
        Unit directions as columns with their signed weights, in extraction order.
    """
    k = T.dim
    if not 1 <= m <= k:
        raise DimensionMismatchError("number of components", f"1..{k}", m)
    if L < 1:
        raise ValueError("L must be at least 1")

    rng = np.random.default_rng(seed)
    work = T.dense().copy()
    columns = np.zeros((k, m))
    weights = np.zeros(m)
    converged = np.zeros(m, dtype=bool)

    for j in range(m):
        starts = rng.standard_normal((L, k))
        starts /= np.linalg.norm(starts, axis=1, keepdims=True)
        starts = np.vstack([_spectral_start(work)[None, :], starts])

        V, lam, ok, degenerate = _batch_power(work, starts, max_iter, tol)
        pool = ok if ok.any() else ~degenerate
        if not pool.any():
            logger.warning(f"Component {j}: every start collapsed (tensor is numerically zero)")
            columns[:, j] = starts[0]
            continue
        score = np.where(pool, np.abs(lam), -np.inf)
        best = int(np.argmax(score))
        v, weight = V[best], float(lam[best])
        converged[j] = bool(ok[best])
        if not converged[j]:
            logger.warning(f"Component {j}: no start converged within {max_iter} iterations")
        logger.debug(f"Component {j}: weight {weight:.6g} from start {best} ({int(ok.sum())}/{len(ok)} converged)")

        columns[:, j] = v
        weights[j] = weight
        work -= weight * np.einsum("i,j,k,l->ijkl", v, v, v, v)

    columns = canonical_signs(columns)
    residual = (T - CumulantTensor4.rank_one_sum(columns, weights)).frobenius_norm()
    return CpFactors(weights=weights, columns=columns, converged=converged, residual=residual)


def decompose_moments(
    sigma: np.ndarray,
    M4: CumulantTensor4,
    m: int,
    opts: Optional[DecompositionOptions] = None,
) -> CpFactors:
    """Whiten, decompose the whitened cumulant and map components back to the data domain."""
    opts = opts or DecompositionOptions()
    whitener = whiten(sigma, m, noise_var=opts.noise_var, eig_floor=opts.eig_floor)
    whitened = decompose_symmetric4(
        whiten_cumulant(M4, whitener),
        m,
        L=opts.n_inits,
        max_iter=opts.max_iter,
        tol=opts.tol,
        seed=opts.seed,
    )
    natural = whitener.unwhiten(whitened.columns)
    norms = np.linalg.norm(natural, axis=0)
    norms[norms == 0] = 1.0
    return CpFactors(
        weights=whitened.weights * norms**4,
        columns=canonical_signs(natural / norms),
        converged=whitened.converged,
        residual=whitened.residual,
        whitened_weights=whitened.weights,
    )


def estimate_factors(data: Dataset, m: int, opts: Optional[DecompositionOptions] = None) -> CpFactors:
    """Decompose a dataset's cumulant; a clamped coordinate is dropped and re-inserted as a zero row."""
    data = data if data.centered else center(data)
    target = data.target
    if target is None:
        return decompose_moments(empirical_covariance(data), empirical_cumulant4(data), m, opts)

    keep = [j for j in range(data.n) if j != target]
    reduced = Dataset(samples=data.samples[:, keep], seed=data.seed, centered=True)
    factors = decompose_moments(empirical_covariance(reduced), empirical_cumulant4(reduced), m, opts)
    columns = np.zeros((data.n, m))
    columns[keep] = factors.columns
    return CpFactors(
        weights=factors.weights,
        columns=columns,
        converged=factors.converged,
        residual=factors.residual,
        whitened_weights=factors.whitened_weights,
    )


def recover_ica_mixing(data: Dataset, m: int, opts: Optional[DecompositionOptions] = None) -> np.ndarray:
    """Unit-norm estimate of the mixing matrix, up to column permutation, sign and scale."""
    return estimate_factors(data, m, opts).columns


def model_cumulant(C: np.ndarray, kappa: np.ndarray) -> CumulantTensor4:
    """Sum_j kappa[j] * c_j^{(x)4}."""
    C = np.atleast_2d(np.asarray(C, dtype=float))
    kappa = np.asarray(kappa, dtype=float).reshape(-1)
    if C.shape[1] != kappa.shape[0]:
        raise DimensionMismatchError("kappa length", C.shape[1], kappa.shape[0])
    return CumulantTensor4.rank_one_sum(C, kappa)

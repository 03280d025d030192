"""Second and fourth order statistics and whitening.

``CumulantTensor4`` stores one value per sorted multi-index
``i1 <= i2 <= i3 <= i4``, so permutation symmetry holds by construction.
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import TYPE_CHECKING, Any, Dict, Optional

import numpy as np
from scipy.linalg import eigh

from .errors import (
    DimensionMismatchError,
    InsufficientSamplesError,
    NotCenteredError,
    WhiteningRankError,
    ZeroVarianceError,
)

if TYPE_CHECKING:
    from .simulator import Dataset

logger = logging.getLogger(__name__)

CENTERING_TOL = 1e-6
DEFAULT_EIG_FLOOR = 1e-10


@dataclass(frozen=True)
class _PackedLayout:
    combos: np.ndarray  # (P, 4) sorted multi-indices
    multiplicity: np.ndarray  # (P,) number of distinct permutations of each
    dense_index: np.ndarray  # (n^4,) packed position of every dense entry


@lru_cache(maxsize=32)
def _layout(n: int) -> _PackedLayout:
    combos = np.array(list(itertools.combinations_with_replacement(range(n), 4)), dtype=np.intp).reshape(-1, 4)
    lookup = {tuple(c): p for p, c in enumerate(combos.tolist())}
    dense_index = np.empty(n**4, dtype=np.intp)
    for flat, idx in enumerate(itertools.product(range(n), repeat=4)):
        dense_index[flat] = lookup[tuple(sorted(idx))]
    multiplicity = np.bincount(dense_index, minlength=len(combos)).astype(float)
    for array in (combos, dense_index, multiplicity):
        array.setflags(write=False)
    return _PackedLayout(combos=combos, multiplicity=multiplicity, dense_index=dense_index)


@dataclass(frozen=True)
class CumulantTensor4:
    """Symmetric 4-way tensor of dimension ``dim`` in packed storage."""

    dim: int
    packed: np.ndarray

    def __post_init__(self) -> None:
        packed = np.array(self.packed, dtype=float, copy=True).reshape(-1)
        expected = len(_layout(self.dim).combos)
        if packed.shape != (expected,):
            raise DimensionMismatchError("packed cumulant entries", expected, packed.shape[0])
        packed.setflags(write=False)
        object.__setattr__(self, "packed", packed)

    # -- construction -------------------------------------------------------

    @classmethod
    def zeros(cls, dim: int) -> "CumulantTensor4":
        return cls(dim, np.zeros(len(_layout(dim).combos)))

    @classmethod
    def from_dense(cls, tensor: np.ndarray) -> "CumulantTensor4":
        """Symmetrise a dense n^4 array (average over the 24 index orders) and pack it."""
        tensor = np.asarray(tensor, dtype=float)
        n = tensor.shape[0]
        if tensor.shape != (n, n, n, n):
            raise DimensionMismatchError("dense tensor shape", (n, n, n, n), tensor.shape)
        sym = sum(np.transpose(tensor, axes) for axes in itertools.permutations(range(4))) / 24.0
        combos = _layout(n).combos
        return cls(n, sym[combos[:, 0], combos[:, 1], combos[:, 2], combos[:, 3]])

    @classmethod
    def rank_one_sum(cls, columns: np.ndarray, weights: np.ndarray) -> "CumulantTensor4":
        """Sum_j weights[j] * columns[:, j]^{(x)4}."""
        columns = np.atleast_2d(np.asarray(columns, dtype=float))
        weights = np.asarray(weights, dtype=float).reshape(-1)
        if columns.shape[1] != weights.shape[0]:
            raise DimensionMismatchError("weights per column", columns.shape[1], weights.shape[0])
        n = columns.shape[0]
        combos = _layout(n).combos
        products = (
            columns[combos[:, 0]] * columns[combos[:, 1]] * columns[combos[:, 2]] * columns[combos[:, 3]]
        )
        return cls(n, products @ weights)

    # -- access -------------------------------------------------------------

    def dense(self) -> np.ndarray:
        n = self.dim
        return self.packed[_layout(n).dense_index].reshape(n, n, n, n)

    def __getitem__(self, index: tuple[int, int, int, int]) -> float:
        n = self.dim
        flat = np.ravel_multi_index(tuple(int(i) for i in index), (n, n, n, n))
        return float(self.packed[_layout(n).dense_index[flat]])

    def frobenius_norm(self) -> float:
        """Frobenius norm of the dense tensor."""
        return float(np.sqrt(np.sum(_layout(self.dim).multiplicity * self.packed**2)))

    def weighted_entries(self) -> np.ndarray:
        """Packed entries scaled by sqrt(multiplicity); their 2-norm is the Frobenius norm."""
        return np.sqrt(_layout(self.dim).multiplicity) * self.packed

    def contract3(self, v: np.ndarray) -> np.ndarray:
        """T(., v, v, v)."""
        v = np.asarray(v, dtype=float)
        if v.shape != (self.dim,):
            raise DimensionMismatchError("contraction vector", self.dim, v.shape)
        return np.einsum("ijkl,j,k,l->i", self.dense(), v, v, v, optimize=True)

    def contract(self, W: np.ndarray) -> "CumulantTensor4":
        """Multilinear map T(W, W, W, W) for an n x k matrix W."""
        W = np.asarray(W, dtype=float)
        if W.ndim != 2 or W.shape[0] != self.dim:
            raise DimensionMismatchError("contraction matrix rows", self.dim, W.shape)
        out = np.einsum("abcd,ai,bj,ck,dl->ijkl", self.dense(), W, W, W, W, optimize=True)
        return CumulantTensor4.from_dense(out)

    # -- arithmetic ---------------------------------------------------------

    def _check_same(self, other: "CumulantTensor4") -> None:
        if not isinstance(other, CumulantTensor4):
            raise TypeError(f"expected CumulantTensor4, got {type(other).__name__}")
        if other.dim != self.dim:
            raise DimensionMismatchError("cumulant dimension", self.dim, other.dim)

    def __sub__(self, other: "CumulantTensor4") -> "CumulantTensor4":
        self._check_same(other)
        return CumulantTensor4(self.dim, self.packed - other.packed)

    # -- serialisation ------------------------------------------------------

    def to_dict(self) -> Dict[str, Any]:
        combos = _layout(self.dim).combos
        return {
            "dim": self.dim,
            "packed_entries": {",".join(map(str, c)): float(v) for c, v in zip(combos.tolist(), self.packed)},
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "CumulantTensor4":
        dim = int(data["dim"])
        entries = data["packed_entries"]
        combos = _layout(dim).combos
        packed = np.zeros(len(combos))
        for p, combo in enumerate(combos.tolist()):
            key = ",".join(map(str, combo))
            if key not in entries:
                raise DimensionMismatchError("packed cumulant entries", f"key {key}", "missing")
            packed[p] = float(entries[key])
        return cls(dim, packed)


def rank_one_jacobian(columns: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Derivative of ``rank_one_sum(columns, weights).weighted_entries()`` with respect to ``columns``.

    Rows follow the packed layout, columns follow ``columns.ravel()``.
    """
    columns = np.atleast_2d(np.asarray(columns, dtype=float))
    weights = np.asarray(weights, dtype=float).reshape(-1)
    n, m = columns.shape
    if weights.shape[0] != m:
        raise DimensionMismatchError("weights per column", m, weights.shape[0])
    layout = _layout(n)
    P = len(layout.combos)
    factors = columns[layout.combos]  # (P, 4, m)
    rows = np.arange(P)
    J = np.zeros((P, n, m))
    for slot in range(4):
        others = np.prod(np.delete(factors, slot, axis=1), axis=1)
        np.add.at(J, (rows, layout.combos[:, slot]), others * weights[None, :])
    J *= np.sqrt(layout.multiplicity)[:, None, None]
    return J.reshape(P, n * m)


@dataclass(frozen=True)
class Whitener:
    """Whitening map ``W`` (n x k) and its unwhitening counterpart (n x k)."""

    W: np.ndarray
    W_pinv_T: np.ndarray
    eigenvalues: np.ndarray

    @property
    def k(self) -> int:
        return self.W.shape[1]

    def unwhiten(self, V: np.ndarray) -> np.ndarray:
        """Map whitened directions back to the data domain."""
        return self.W_pinv_T @ V


# ---------------------------------------------------------------------------
# Estimators
# ---------------------------------------------------------------------------


def _require_samples(data: "Dataset", required: int) -> None:
    if data.N < required:
        raise InsufficientSamplesError(required, data.N)


def _require_centered(data: "Dataset") -> np.ndarray:
    X = data.samples
    mean_norm = float(np.linalg.norm(X.mean(axis=0)))
    if mean_norm > CENTERING_TOL:
        raise NotCenteredError(mean_norm, CENTERING_TOL)
    return X


def center(data: "Dataset") -> "Dataset":
    """Subtract column means; constant columns (a clamped target) become exactly 0."""
    _require_samples(data, 2)
    X = data.samples
    centered = X - X.mean(axis=0)
    centered[:, np.ptp(X, axis=0) == 0] = 0.0
    return replace(data, samples=centered, centered=True)


def empirical_covariance(data: "Dataset") -> np.ndarray:
    """(1/N) X^T X of centered data."""
    _require_samples(data, 2)
    X = _require_centered(data)
    sigma = X.T @ X / data.N
    return (sigma + sigma.T) / 2.0


def empirical_cumulant4(data: "Dataset") -> CumulantTensor4:
    """Fourth order cumulant E[x^{(x)4}] - T of centered data."""
    _require_samples(data, 2)
    X = _require_centered(data)
    n = data.n
    rows, cols = np.triu_indices(n)
    pair_of = np.empty((n, n), dtype=np.intp)
    pair_of[rows, cols] = np.arange(len(rows))
    pair_of[cols, rows] = np.arange(len(rows))

    pairs = X[:, rows] * X[:, cols]
    fourth = pairs.T @ pairs / data.N
    sigma = X.T @ X / data.N

    c = _layout(n).combos
    a, b, d, e = c[:, 0], c[:, 1], c[:, 2], c[:, 3]
    moments = fourth[pair_of[a, b], pair_of[d, e]]
    pairings = sigma[a, b] * sigma[d, e] + sigma[a, d] * sigma[b, e] + sigma[a, e] * sigma[b, d]
    return CumulantTensor4(n, moments - pairings)


def excess_kurtosis(samples: np.ndarray) -> float:
    """m4 / m2^2 - 3 of the standardised samples."""
    x = np.asarray(samples, dtype=float).reshape(-1)
    if x.size < 4:
        raise InsufficientSamplesError(4, x.size)
    x = x - x.mean()
    m2 = float(np.mean(x**2))
    if m2 == 0:
        raise ZeroVarianceError("excess kurtosis is undefined for a constant sample")
    return float(np.mean(x**4) / m2**2 - 3.0)


def whiten(
    sigma: np.ndarray,
    k: int,
    noise_var: Optional[float] = None,
    eig_floor: float = DEFAULT_EIG_FLOOR,
) -> Whitener:
    """W = U_k diag(lambda_k)^{-1/2} from the top-k eigenpairs of sigma - noise_var I."""
    sigma = np.asarray(sigma, dtype=float)
    n = sigma.shape[0]
    if sigma.shape != (n, n):
        raise DimensionMismatchError("covariance shape", (n, n), sigma.shape)
    if not 1 <= k <= n:
        raise DimensionMismatchError("whitening dimension", f"1..{n}", k)
    adjusted = (sigma + sigma.T) / 2.0
    if noise_var:
        adjusted = adjusted - noise_var * np.eye(n)

    eigenvalues, vectors = eigh(adjusted)
    order = np.argsort(eigenvalues)[::-1]
    eigenvalues, vectors = eigenvalues[order], vectors[:, order]
    floor = eig_floor * max(float(eigenvalues[0]), np.finfo(float).tiny)
    if eigenvalues[k - 1] <= floor:
        raise WhiteningRankError(k, float(eigenvalues[k - 1]), floor)

    U = vectors[:, :k]
    pivots = np.argmax(np.abs(U), axis=0)
    U = U * np.sign(U[pivots, np.arange(k)])
    lam = eigenvalues[:k]
    logger.debug(f"Whitening to k={k}; retained eigenvalues {np.array2string(lam, precision=4)}")
    return Whitener(W=U / np.sqrt(lam), W_pinv_T=U * np.sqrt(lam), eigenvalues=lam)


def whiten_cumulant(M4: CumulantTensor4, whitener: Whitener) -> CumulantTensor4:
    """M4(W, W, W, W)."""
    if M4.dim != whitener.W.shape[0]:
        raise DimensionMismatchError("cumulant vs whitener dimension", whitener.W.shape[0], M4.dim)
    return M4.contract(whitener.W)

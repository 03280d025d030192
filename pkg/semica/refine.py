"""Joint refinement of (A, B, C, D_i) against the linear and cumulant equations.

The objective is

    ||(I-B)C - A||^2 + sum_i ||(I-B_i)D_i - A_i||^2
        + ||K(C) - M4_obs||^2 + sum_i ||K(D_i) - M4_i||^2

with K(M) = sum_j kappa_j m_j^{(x)4}. Blocks are visited in the order
A, B, C, D_i. A and B are exact least-squares solves; C and D_i take one
damped Gauss-Newton step, halved until the block residual drops. A block
is only accepted when the objective does not go up, so the trace is
monotone.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Dict, List, Mapping, Optional, Sequence

import numpy as np
from scipy.linalg import lstsq

from .cumulants import CumulantTensor4, rank_one_jacobian
from .decomposition import model_cumulant
from .errors import DimensionMismatchError, SolverFaultError
from .model import intervene_rows
from .types import RefineOptions

logger = logging.getLogger(__name__)

# Objective values at or below this (times max(1, ||M4_obs||^2)) are an exact fit.
ZERO_OBJECTIVE = 1e-24
ARMIJO_C = 1e-4


@dataclass(frozen=True)
class RefineState:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: Dict[int, np.ndarray]

    def copy(self) -> "RefineState":
        return RefineState(
            A=self.A.copy(), B=self.B.copy(), C=self.C.copy(), D={i: Di.copy() for i, Di in self.D.items()}
        )


@dataclass(frozen=True)
class RefineOutcome:
    state: RefineState
    trace: List[float]
    cycles: int
    converged: bool
    exact: bool = False

    @property
    def objective(self) -> float:
        return self.trace[-1]


@dataclass
class _Problem:
    M4_obs: CumulantTensor4
    M4_int: Mapping[int, CumulantTensor4]
    kappa: np.ndarray
    free: np.ndarray
    options: RefineOptions


def _check_dims(state: RefineState, M4_obs: CumulantTensor4, M4_int: Mapping[int, CumulantTensor4], kappa: np.ndarray) -> None:
    n, m = state.A.shape
    if state.B.shape != (n, n):
        raise DimensionMismatchError("B shape", (n, n), state.B.shape)
    if state.C.shape != (n, m):
        raise DimensionMismatchError("C shape", (n, m), state.C.shape)
    if kappa.shape != (m,):
        raise DimensionMismatchError("kappa length", m, kappa.shape)
    if M4_obs.dim != n:
        raise DimensionMismatchError("observational cumulant dimension", n, M4_obs.dim)
    for i, D in state.D.items():
        if D.shape != (n, m):
            raise DimensionMismatchError(f"D_{i} shape", (n, m), D.shape)
        if i not in M4_int:
            raise DimensionMismatchError(f"interventional cumulant for x{i}", "present", "missing")
        if M4_int[i].dim != n:
            raise DimensionMismatchError(f"interventional cumulant dimension for x{i}", n, M4_int[i].dim)


def _linear_residuals(state: RefineState) -> float:
    n = state.B.shape[0]
    total = float(np.sum(((np.eye(n) - state.B) @ state.C - state.A) ** 2))
    for i, D in state.D.items():
        A_i, B_i = intervene_rows(state.A, state.B, i)
        total += float(np.sum(((np.eye(n) - B_i) @ D - A_i) ** 2))
    return total


def _cumulant_term(M: np.ndarray, kappa: np.ndarray, target: CumulantTensor4) -> float:
    return (model_cumulant(M, kappa) - target).frobenius_norm() ** 2


def joint_objective(
    A: np.ndarray,
    B: np.ndarray,
    C: np.ndarray,
    D_list: Mapping[int, np.ndarray],
    M4_obs: CumulantTensor4,
    M4_int_list: Mapping[int, CumulantTensor4],
    kappa: np.ndarray,
) -> float:
    """Sum of the linear-system and cumulant-matching squared residuals."""
    state = RefineState(
        A=np.asarray(A, dtype=float),
        B=np.asarray(B, dtype=float),
        C=np.asarray(C, dtype=float),
        D={int(i): np.asarray(D, dtype=float) for i, D in D_list.items()},
    )
    kappa = np.asarray(kappa, dtype=float).reshape(-1)
    _check_dims(state, M4_obs, M4_int_list, kappa)
    total = _linear_residuals(state) + _cumulant_term(state.C, kappa, M4_obs)
    for i, D in state.D.items():
        total += _cumulant_term(D, kappa, M4_int_list[i])
    return total


def _free_mask(n: int, order: Sequence[int], fixed_columns: Sequence[int] = ()) -> np.ndarray:
    position = np.empty(n, dtype=int)
    position[list(order)] = np.arange(n)
    free = position[None, :] < position[:, None]
    free[:, list(fixed_columns)] = False
    return free


# ---------------------------------------------------------------------------
# Blocks
# ---------------------------------------------------------------------------


def _update_A(state: RefineState) -> RefineState:
    n = state.B.shape[0]
    A = np.empty_like(state.A)
    R0 = (np.eye(n) - state.B) @ state.C
    R = {i: (np.eye(n) - intervene_rows(state.A, state.B, i)[1]) @ D for i, D in state.D.items()}
    for r in range(n):
        rows = [R0[r]] + [R_i[r] for i, R_i in R.items() if i != r]
        A[r] = np.mean(rows, axis=0)
    return replace(state, A=A)


def _update_B(state: RefineState, free: np.ndarray) -> RefineState:
    n = state.B.shape[0]
    B = np.zeros_like(state.B)
    for r in range(n):
        support = np.flatnonzero(free[r])
        if support.size == 0:
            continue
        mats = [state.C] + [D for i, D in state.D.items() if i != r]
        design = np.hstack([M[support, :] for M in mats]).T
        target = np.concatenate([M[r] - state.A[r] for M in mats])
        solution, *_ = lstsq(design, target)
        B[r, support] = solution
    return replace(state, B=B)


def _block_residuals(M: np.ndarray, L: np.ndarray, A_t: np.ndarray, kappa: np.ndarray, target: CumulantTensor4) -> np.ndarray:
    """Residual vector whose squared norm is the block's share of the objective."""
    linear = (L @ M - A_t).ravel()
    return np.concatenate([linear, (model_cumulant(M, kappa) - target).weighted_entries()])


def _block_jacobian(M: np.ndarray, L: np.ndarray, kappa: np.ndarray) -> np.ndarray:
    m = M.shape[1]
    return np.vstack([np.kron(L, np.eye(m)), rank_one_jacobian(M, kappa)])


def _descend(
    key: str,
    M: np.ndarray,
    L: np.ndarray,
    A_t: np.ndarray,
    target: CumulantTensor4,
    problem: _Problem,
    pinned_row: Optional[int] = None,
) -> np.ndarray:
    """One damped Gauss-Newton step with backtracking halving; M comes back unchanged if no step is accepted."""
    kappa = problem.kappa
    residuals = _block_residuals(M, L, A_t, kappa, target)
    current = float(residuals @ residuals)
    free = np.ones(M.shape, dtype=bool)
    if pinned_row is not None:
        free[pinned_row] = False
    J = _block_jacobian(M, L, kappa)[:, free.ravel()]
    grad = 2.0 * J.T @ residuals
    if not np.all(np.isfinite(grad)):
        raise SolverFaultError(f"Non-finite gradient in block {key}")
    if not np.any(grad):
        return M

    # Minimum-norm solve, so a rank-deficient Jacobian still gives a descent direction.
    direction, *_ = lstsq(J, -residuals)
    slope = float(grad @ direction)
    if not slope < 0:
        direction, slope = -grad, -float(grad @ grad)

    step = problem.options.initial_step
    for _ in range(problem.options.max_halvings + 1):
        candidate = M.copy()
        candidate[free] += step * direction
        tried = _block_residuals(candidate, L, A_t, kappa, target)
        value = float(tried @ tried)
        if np.isfinite(value) and value <= current + ARMIJO_C * step * slope:
            return candidate
        step /= 2.0
    logger.debug(f"Block {key}: no acceptable step after {problem.options.max_halvings} halvings")
    return M


def _update_C(state: RefineState, problem: _Problem) -> RefineState:
    n = state.B.shape[0]
    C = _descend("C", state.C, np.eye(n) - state.B, state.A, problem.M4_obs, problem)
    return replace(state, C=C)


def _update_D(state: RefineState, problem: _Problem, i: int) -> RefineState:
    n = state.B.shape[0]
    A_i, B_i = intervene_rows(state.A, state.B, i)
    D = _descend(f"D{i}", state.D[i], np.eye(n) - B_i, A_i, problem.M4_int[i], problem, pinned_row=i)
    D[i] = 0.0
    return replace(state, D={**state.D, i: D})


def _objective(state: RefineState, problem: _Problem) -> float:
    return joint_objective(state.A, state.B, state.C, state.D, problem.M4_obs, problem.M4_int, problem.kappa)


def _guarded(state: RefineState, candidate: RefineState, value: float, problem: _Problem, block: str) -> tuple[RefineState, float]:
    new_value = _objective(candidate, problem)
    if not np.isfinite(new_value):
        raise SolverFaultError(f"Objective became non-finite after the {block} block")
    if new_value <= value:
        return candidate, new_value
    logger.debug(f"Block {block} rejected: {new_value:.6g} > {value:.6g}")
    return state, value


def joint_refine(
    init: RefineState,
    M4_obs: CumulantTensor4,
    M4_int: Mapping[int, CumulantTensor4],
    kappa: np.ndarray,
    order: Optional[Sequence[int]] = None,
    opts: Optional[RefineOptions] = None,
    fixed_columns: Sequence[int] = (),
) -> RefineOutcome:
    """Block-coordinate descent from ``init``; B keeps its causal-order support.

    Args:
        init: Starting (A, B, C, D_i). Row i of each D_i is zeroed first.
        M4_obs: Observational fourth cumulant.
        M4_int: Interventional fourth cumulant per key of ``init.D``.
        kappa: Per-component cumulant weight.
        order: Causal order; identity when omitted.
        opts: Cycle, step and stopping knobs.
        fixed_columns: Variables whose outgoing edges stay at zero.

    Returns:
        The final state, the per-cycle objective trace (never increasing)
        and whether it stopped on the tolerance or an exact fit.

    Raises:
        DimensionMismatchError: Shapes of the state, cumulants and kappa disagree.
        SolverFaultError: The objective became non-finite or rose by more than ``opts.slack``.
    """
    opts = opts or RefineOptions()
    kappa = np.asarray(kappa, dtype=float).reshape(-1)
    state = init.copy()
    _check_dims(state, M4_obs, M4_int, kappa)
    n = state.B.shape[0]
    order = list(range(n)) if order is None else [int(k) for k in order]
    free = _free_mask(n, order, fixed_columns)
    state = replace(state, B=np.where(free, state.B, 0.0), D={i: _pin(D, i) for i, D in state.D.items()})

    problem = _Problem(M4_obs=M4_obs, M4_int=M4_int, kappa=kappa, free=free, options=opts)
    value = _objective(state, problem)
    if not np.isfinite(value):
        raise SolverFaultError("Initial objective is not finite")
    trace = [value]
    floor = ZERO_OBJECTIVE * max(1.0, M4_obs.frobenius_norm() ** 2)
    converged = value <= floor

    cycles = 0
    while cycles < opts.max_cycles and not converged:
        cycles += 1
        start = value
        state, value = _guarded(state, _update_A(state), value, problem, "A")
        state, value = _guarded(state, _update_B(state, free), value, problem, "B")
        state, value = _guarded(state, _update_C(state, problem), value, problem, "C")
        for i in sorted(state.D):
            state, value = _guarded(state, _update_D(state, problem, i), value, problem, f"D{i}")
        if value > start + opts.slack:
            raise SolverFaultError(f"Objective increased from {start:.6g} to {value:.6g} in cycle {cycles}")
        trace.append(value)
        logger.debug(f"Refine cycle {cycles}: objective {value:.6g}")
        if value <= floor or (start - value) <= opts.stop_tol * max(start, np.finfo(float).tiny):
            converged = True

    return RefineOutcome(state=state, trace=trace, cycles=cycles, converged=converged, exact=value <= floor)


def _pin(D: np.ndarray, i: int) -> np.ndarray:
    D = np.array(D, dtype=float, copy=True)
    D[i] = 0.0
    return D

"""Causal order from single-variable interventions.

Under Do(X_i) only the descendants of X_i change, so the descendant
relation read off mean shifts is a DAG whose topological order is a causal
order of the observables.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence, Tuple

import networkx as nx
import numpy as np

from .errors import CyclicEffectsError, DimensionMismatchError, MissingInterventionError
from .model import SemIcaModel, total_effects
from .simulator import Dataset

logger = logging.getLogger(__name__)

DEFAULT_THRESHOLD_Z = 6.0


@dataclass(frozen=True)
class EffectMatrix:
    """affected[j, i] is True when X_j moved under Do(X_i); the diagonal is always False."""

    affected: np.ndarray

    def __post_init__(self) -> None:
        affected = np.array(self.affected, dtype=bool, copy=True)
        n = affected.shape[0]
        if affected.shape != (n, n):
            raise DimensionMismatchError("effect matrix shape", (n, n), affected.shape)
        np.fill_diagonal(affected, False)
        affected.setflags(write=False)
        object.__setattr__(self, "affected", affected)

    @property
    def n(self) -> int:
        return self.affected.shape[0]

    @classmethod
    def empty(cls, n: int) -> "EffectMatrix":
        return cls(np.zeros((n, n), dtype=bool))

    @classmethod
    def from_model(cls, model: SemIcaModel, tol: float = 1e-12) -> "EffectMatrix":
        """Population effects: nonzero total effects of each variable."""
        return cls(np.abs(total_effects(model)) > tol)

    def descendants(self, i: int) -> Tuple[int, ...]:
        return tuple(int(j) for j in np.flatnonzero(self.affected[:, i]))

    def graph(self) -> nx.DiGraph:
        graph = nx.DiGraph()
        graph.add_nodes_from(range(self.n))
        targets, sources = np.nonzero(self.affected)
        graph.add_edges_from((int(i), int(j)) for j, i in zip(targets, sources))
        return graph


def detect_affected(obs: Dataset, intv: Dataset, threshold_z: float = DEFAULT_THRESHOLD_Z) -> np.ndarray:
    """Flag coordinates whose mean moved by more than threshold_z Welch standard errors."""
    if intv.target is None:
        raise MissingInterventionError(f"Dataset (seed={intv.seed}) carries no intervention tag")
    if obs.n != intv.n:
        raise DimensionMismatchError("observational vs interventional width", obs.n, intv.n)
    if obs.centered or intv.centered:
        raise ValueError("detect_affected compares raw means; pass uncentered datasets")

    diff = intv.samples.mean(axis=0) - obs.samples.mean(axis=0)
    var_obs = obs.samples.var(axis=0, ddof=1) if obs.N > 1 else np.zeros(obs.n)
    var_int = intv.samples.var(axis=0, ddof=1) if intv.N > 1 else np.zeros(intv.n)
    se = np.sqrt(var_obs / obs.N + var_int / intv.N)

    scale = np.maximum(np.abs(obs.samples.mean(axis=0)), 1.0)
    flagged = np.where(se > 0, np.abs(diff) > threshold_z * se, np.abs(diff) > 1e-12 * scale)
    flagged[intv.target] = False
    logger.debug(f"Do(x{intv.target}): affected {np.flatnonzero(flagged).tolist()}")
    return flagged


def order_from_effects(effects: EffectMatrix) -> Tuple[int, ...]:
    """Topological order of the descendant relation, ties broken by smaller index."""
    graph = effects.graph()
    try:
        cycle = nx.find_cycle(graph)
    except nx.NetworkXNoCycle:
        return tuple(int(v) for v in nx.lexicographical_topological_sort(graph))
    raise CyclicEffectsError([int(edge[0]) for edge in cycle])


def effects_from_data(obs: Dataset, intvs: Sequence[Dataset], threshold_z: float = DEFAULT_THRESHOLD_Z) -> EffectMatrix:
    """EffectMatrix with one column per interventional dataset; other columns stay False."""
    affected = np.zeros((obs.n, obs.n), dtype=bool)
    seen: set[int] = set()
    for intv in intvs:
        target = intv.target
        if target is None:
            raise MissingInterventionError(f"Dataset (seed={intv.seed}) carries no intervention tag")
        if target in seen:
            raise ValueError(f"Two interventional datasets target x{target}")
        seen.add(target)
        affected[:, target] = detect_affected(obs, intv, threshold_z)
    return EffectMatrix(affected)


def causal_order(obs: Dataset, intvs: Sequence[Dataset], threshold_z: float = DEFAULT_THRESHOLD_Z) -> Tuple[int, ...]:
    """Ancestors-first order from observational data and single-variable interventions."""
    order = order_from_effects(effects_from_data(obs, intvs, threshold_z))
    logger.info(f"Causal order: {list(order)}")
    return order

"""Tests for causal-order detection from interventions."""
import numpy as np
import pytest

from semica.errors import CyclicEffectsError, DimensionMismatchError, MissingInterventionError
from semica.cumulants import center
from semica.model import SemIcaModel
from semica.ordering import EffectMatrix, causal_order, detect_affected, effects_from_data, order_from_effects
from semica.simulator import (
    Dataset,
    default_intervention_value,
    derive_seed,
    sample_interventional,
    sample_observational,
)
from semica.types import Intervention


def _intervene(model, target, N, seed):
    iv = Intervention(target=target, value=default_intervention_value(model, target))
    return sample_interventional(model, iv, N, seed)


class TestEffectMatrix:
    def test_diagonal_forced_false(self):
        effects = EffectMatrix(np.ones((3, 3), dtype=bool))
        assert not effects.affected.diagonal().any()

    def test_from_model(self, chain_model):
        effects = EffectMatrix.from_model(chain_model)
        assert effects.descendants(0) == (1, 2)
        assert effects.descendants(1) == (2,)
        assert effects.descendants(2) == ()

    def test_graph_edges_point_to_descendants(self, two_var_model):
        graph = EffectMatrix.from_model(two_var_model).graph()
        assert list(graph.edges) == [(0, 1)]

    def test_shape(self):
        with pytest.raises(DimensionMismatchError):
            EffectMatrix(np.zeros((2, 3), dtype=bool))


class TestOrderFromEffects:
    def test_chain(self, chain_model):
        assert order_from_effects(EffectMatrix.from_model(chain_model)) == (0, 1, 2)

    def test_no_effects_gives_identity(self):
        assert order_from_effects(EffectMatrix.empty(4)) == (0, 1, 2, 3)

    def test_ties_broken_by_smaller_index(self):
        affected = np.zeros((3, 3), dtype=bool)
        affected[0, 2] = True  # x2 -> x0
        assert order_from_effects(EffectMatrix(affected)) == (1, 2, 0)

    def test_cycle(self):
        affected = np.zeros((3, 3), dtype=bool)
        affected[1, 0] = True
        affected[2, 1] = True
        affected[0, 2] = True
        with pytest.raises(CyclicEffectsError) as exc_info:
            order_from_effects(EffectMatrix(affected))
        assert sorted(exc_info.value.cycle) == [0, 1, 2]


class TestDetectAffected:
    def test_descendant_flagged(self, two_var_model):
        obs = sample_observational(two_var_model, 2_000, seed=1)
        intv = _intervene(two_var_model, 0, 2_000, seed=2)
        np.testing.assert_array_equal(detect_affected(obs, intv), [False, True])

    def test_ancestor_not_flagged(self, two_var_model):
        obs = sample_observational(two_var_model, 2_000, seed=1)
        intv = _intervene(two_var_model, 1, 2_000, seed=3)
        np.testing.assert_array_equal(detect_affected(obs, intv), [False, False])

    def test_unaffected_coordinates_rarely_flagged(self):
        model = SemIcaModel(A=np.eye(3), B=np.zeros((3, 3)))
        flags = 0
        for seed in range(200):
            obs = sample_observational(model, 500, seed=derive_seed(seed, 0))
            intv = _intervene(model, 0, 500, seed=derive_seed(seed, 1))
            flags += int(detect_affected(obs, intv)[1:].sum())
        assert flags / 400 < 0.01

    def test_zero_variance_coordinates(self):
        obs = Dataset(samples=np.array([[1.0, 0.0], [1.0, 2.0]]))
        same = Dataset(samples=np.array([[1.0, 5.0], [1.0, 5.0]]), intervention=Intervention(target=1, value=5.0))
        moved = Dataset(samples=np.array([[2.0, 5.0], [2.0, 5.0]]), intervention=Intervention(target=1, value=5.0))
        assert not detect_affected(obs, same)[0]
        assert detect_affected(obs, moved)[0]

    def test_requires_intervention_tag(self, two_var_model):
        obs = sample_observational(two_var_model, 10, seed=0)
        with pytest.raises(MissingInterventionError):
            detect_affected(obs, obs)

    def test_rejects_centered_data(self, two_var_model):
        obs = sample_observational(two_var_model, 10, seed=0)
        intv = _intervene(two_var_model, 0, 10, seed=1)
        with pytest.raises(ValueError, match="uncentered"):
            detect_affected(center(obs), intv)

    def test_width_mismatch(self, two_var_model):
        obs = Dataset(samples=np.zeros((3, 3)))
        intv = _intervene(two_var_model, 0, 10, seed=1)
        with pytest.raises(DimensionMismatchError):
            detect_affected(obs, intv)


class TestCausalOrder:
    def test_chain_from_samples(self, chain_model):
        obs = sample_observational(chain_model, 2_000, seed=10)
        intvs = [_intervene(chain_model, t, 2_000, seed=20 + t) for t in range(3)]
        assert causal_order(obs, intvs) == (0, 1, 2)

    def test_partial_interventions(self, chain_model):
        obs = sample_observational(chain_model, 2_000, seed=10)
        effects = effects_from_data(obs, [_intervene(chain_model, 1, 2_000, seed=30)])
        assert effects.descendants(1) == (2,)
        assert not effects.affected[:, 0].any()

    def test_duplicate_targets(self, chain_model):
        obs = sample_observational(chain_model, 100, seed=10)
        intv = _intervene(chain_model, 1, 100, seed=30)
        with pytest.raises(ValueError, match="Two interventional datasets"):
            effects_from_data(obs, [intv, intv])

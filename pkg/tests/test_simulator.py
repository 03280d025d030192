"""Tests for sampling, model generation and population moments."""
from dataclasses import replace

import numpy as np
import pytest

from semica.cumulants import CumulantTensor4, excess_kurtosis
from semica.errors import (
    DimensionMismatchError,
    GenerationError,
    InterventionIndexError,
    MissingInterventionError,
    ModelValidationError,
)
from semica.model import reduced_mixing, response_matrix, validate_model
from semica.simulator import (
    Dataset,
    default_intervention_value,
    derive_seed,
    observational_moments,
    population_moments,
    random_model,
    sample_interventional,
    sample_latents,
    sample_observational,
)
from semica.types import Intervention, LatentFamily, LatentSpec


class TestDeriveSeed:
    def test_deterministic(self):
        assert derive_seed(5, 1, 2) == derive_seed(5, 1, 2)

    def test_keys_separate_streams(self):
        seeds = {derive_seed(5), derive_seed(5, 0), derive_seed(5, 1), derive_seed(6, 0)}
        assert len(seeds) == 4

    def test_trailing_zero_key_is_significant(self):
        assert derive_seed(5) != derive_seed(5, 0)
        assert derive_seed(5, 1) != derive_seed(5, 1, 0)


class TestDataset:
    def test_samples_are_copied_and_read_only(self):
        raw = np.zeros((3, 2))
        data = Dataset(samples=raw)
        raw[0, 0] = 1.0
        assert data.samples[0, 0] == 0.0
        with pytest.raises(ValueError):
            data.samples[0, 0] = 1.0

    def test_rejects_vectors(self):
        with pytest.raises(DimensionMismatchError):
            Dataset(samples=np.zeros(5))

    def test_target_out_of_range(self):
        with pytest.raises(InterventionIndexError):
            Dataset(samples=np.zeros((3, 2)), intervention=Intervention(target=2, value=1.0))

    def test_describe(self):
        data = Dataset(samples=np.zeros((4, 2)), intervention=Intervention(target=1, value=2.5))
        assert data.describe() == "Do(x1=2.5) (N=4)"
        assert "observational" in Dataset(samples=np.zeros((4, 2))).describe()


class TestIntervention:
    def test_target_and_value_paired(self):
        with pytest.raises(ValueError):
            Intervention(target=1)

    def test_value_must_be_finite(self):
        with pytest.raises(ValueError):
            Intervention(target=0, value=float("inf"))

    def test_observational(self):
        assert Intervention.observational().is_observational


class TestSampleLatents:
    @pytest.mark.parametrize("family", list(LatentFamily))
    def test_mean_and_variance(self, family):
        H = sample_latents(LatentSpec(family=family, mean=1.0), 2, 100_000, seed=3)
        assert H.shape == (100_000, 2)
        np.testing.assert_allclose(H.mean(axis=0), 1.0, atol=0.02)
        np.testing.assert_allclose(H.var(axis=0), 1.0, atol=0.03)

    def test_laplace_kurtosis(self):
        H = sample_latents(LatentSpec(), 1, 200_000, seed=11)
        assert excess_kurtosis(H[:, 0]) == pytest.approx(3.0, abs=0.5)

    def test_rademacher_values(self):
        H = sample_latents(LatentSpec(family=LatentFamily.RADEMACHER, mean=0.0), 3, 50, seed=0)
        assert set(np.unique(H)) <= {-1.0, 1.0}

    def test_deterministic(self):
        spec = LatentSpec()
        np.testing.assert_array_equal(sample_latents(spec, 2, 10, 4), sample_latents(spec, 2, 10, 4))


class TestSampling:
    def test_observational_noiseless_lies_in_column_space(self, chain_model):
        data = sample_observational(chain_model, 50, seed=1)
        assert data.intervention.is_observational
        C = reduced_mixing(chain_model)
        H = np.linalg.solve(C, data.samples.T).T
        np.testing.assert_allclose(H @ C.T, data.samples, atol=1e-10)

    def test_observational_mean(self, two_var_model):
        data = sample_observational(two_var_model, 100_000, seed=2)
        expected, _ = observational_moments(two_var_model)
        np.testing.assert_allclose(data.samples.mean(axis=0), expected, atol=0.03)

    def test_same_seed_same_samples(self, chain_model):
        a = sample_observational(chain_model, 20, seed=9)
        b = sample_observational(chain_model, 20, seed=9)
        np.testing.assert_array_equal(a.samples, b.samples)

    def test_interventional_clamps_target(self, two_var_model):
        iv = Intervention(target=0, value=7.0)
        data = sample_interventional(two_var_model, iv, 1_000, seed=4)
        assert data.target == 0
        np.testing.assert_array_equal(data.samples[:, 0], 7.0)

    def test_interventional_propagates_to_descendants(self, two_var_model):
        data = sample_interventional(two_var_model, Intervention(target=0, value=7.0), 100_000, seed=4)
        # x1 = 0.5 * 7 + h1, E[h1] = 1
        assert data.samples[:, 1].mean() == pytest.approx(4.5, abs=0.03)

    def test_interventional_leaves_ancestors(self, two_var_model):
        obs = sample_observational(two_var_model, 100_000, seed=5)
        intv = sample_interventional(two_var_model, Intervention(target=1, value=-3.0), 100_000, seed=6)
        assert intv.samples[:, 0].mean() == pytest.approx(obs.samples[:, 0].mean(), abs=0.03)

    def test_clamped_column_stays_exact_with_noise(self, chain_model):
        noisy = replace(chain_model, noise_std=0.5)
        data = sample_interventional(noisy, Intervention(target=1, value=2.0), 200, seed=8)
        np.testing.assert_array_equal(data.samples[:, 1], 2.0)

    def test_interventional_requires_target(self, two_var_model):
        with pytest.raises(MissingInterventionError):
            sample_interventional(two_var_model, Intervention(), 10, seed=0)

    def test_interventional_target_range(self, two_var_model):
        with pytest.raises(InterventionIndexError):
            sample_interventional(two_var_model, Intervention(target=2, value=1.0), 10, seed=0)


class TestDefaultInterventionValue:
    def test_ten_standard_deviations_above_mean(self, two_var_model):
        # E[x0] = 1 and Var[x0] = 1
        assert default_intervention_value(two_var_model, 0) == pytest.approx(11.0)

    def test_custom_scale(self, two_var_model):
        # E[x1] = 1.5, Var[x1] = 0.25 + 1
        expected = 1.5 + 2.0 * np.sqrt(1.25)
        assert default_intervention_value(two_var_model, 1, scale=2.0) == pytest.approx(expected)

    def test_range(self, two_var_model):
        with pytest.raises(InterventionIndexError):
            default_intervention_value(two_var_model, 5)


class TestRandomModel:
    def test_valid_and_canonical(self):
        model = random_model(5, 3, seed=0)
        assert validate_model(model).valid
        np.testing.assert_array_equal(np.triu(model.B), 0.0)

    def test_deterministic(self):
        a = random_model(4, 4, seed=12)
        b = random_model(4, 4, seed=12)
        np.testing.assert_array_equal(a.A, b.A)
        np.testing.assert_array_equal(a.B, b.B)

    def test_weights_in_range(self):
        model = random_model(6, 6, seed=3, weight_lo=0.5, weight_hi=1.0)
        magnitudes = np.abs(model.B[model.B != 0])
        assert np.all((magnitudes >= 0.5) & (magnitudes <= 1.0))
        assert np.all((np.abs(model.A) >= 0.5) & (np.abs(model.A) <= 1.0))

    def test_edge_prob_zero_gives_empty_graph(self):
        model = random_model(4, 2, seed=1, edge_prob=0.0)
        np.testing.assert_array_equal(model.B, 0.0)

    def test_m_exceeds_n(self):
        with pytest.raises(ModelValidationError, match="m exceeds n"):
            random_model(2, 3, seed=0)

    def test_gives_up_after_max_regeneration(self):
        # A rank tolerance of 1 rejects every draw.
        with pytest.raises(GenerationError) as exc_info:
            random_model(3, 3, seed=0, rank_tol=1.0, max_regeneration=3)
        assert exc_info.value.attempts == 3
        assert any("rank deficient" in v for v in exc_info.value.last_violations)


class TestPopulationMoments:
    def test_matrices(self, chain_model):
        pop = population_moments(chain_model, targets=[0, 2])
        np.testing.assert_allclose(pop.C, reduced_mixing(chain_model))
        assert sorted(pop.D) == [0, 2]
        np.testing.assert_allclose(pop.D[2], response_matrix(chain_model, 2))
        np.testing.assert_array_equal(pop.kappa, 3.0)

    def test_cumulants_are_rank_one_sums(self, chain_model):
        pop = population_moments(chain_model)
        expected = CumulantTensor4.rank_one_sum(pop.C, np.full(3, 3.0))
        np.testing.assert_allclose(pop.M4_obs.packed, expected.packed)
        assert sorted(pop.M4_int) == [0, 1, 2]

    def test_interventional_cumulants_use_each_response(self, two_var_model):
        pop = population_moments(two_var_model, targets=[1])
        # D_1 = [[1, 0], [0, 0]]: only x0 still carries a latent.
        assert pop.M4_int[1][0, 0, 0, 0] == pytest.approx(3.0)
        assert pop.M4_int[1][1, 1, 1, 1] == pytest.approx(0.0)
        expected = CumulantTensor4.rank_one_sum(pop.D[1], pop.kappa)
        np.testing.assert_allclose(pop.M4_int[1].packed, expected.packed)

    def test_rademacher_kappa(self, rademacher_model):
        np.testing.assert_array_equal(population_moments(rademacher_model).kappa, -2.0)

    def test_target_range(self, chain_model):
        with pytest.raises(InterventionIndexError):
            population_moments(chain_model, targets=[3])

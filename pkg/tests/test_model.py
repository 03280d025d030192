"""Tests for the model algebra (C, G, D_i, validation, alignment)."""
import numpy as np
import pytest

from semica.errors import DimensionMismatchError, InterventionIndexError, ModelValidationError
from semica.model import (
    ColumnAlignment,
    SemIcaModel,
    apply_alignment,
    canonical_rows,
    intervened_matrices,
    reduced_mixing,
    response_matrix,
    total_effects,
    validate_model,
)
from semica.types import LatentSpec


class TestSemIcaModel:
    def test_shapes(self, chain_model):
        assert chain_model.n == 3
        assert chain_model.m == 3

    def test_matrices_are_read_only(self, two_var_model):
        with pytest.raises(ValueError):
            two_var_model.A[0, 0] = 2.0

    def test_b_shape_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            SemIcaModel(A=np.eye(3), B=np.zeros((2, 2)))

    def test_negative_noise_rejected(self):
        with pytest.raises(ModelValidationError):
            SemIcaModel(A=np.eye(2), B=np.zeros((2, 2)), noise_std=-1.0)

    def test_from_dag_permutes_to_lower_form(self):
        # Edge 0 -> 1 stored upside down: x0 depends on x1.
        B = np.array([[0.0, 0.7], [0.0, 0.0]])
        A = np.array([[1.0], [2.0]])
        model = SemIcaModel.from_dag(A, B)
        assert model.ordering == (1, 0)
        np.testing.assert_array_equal(model.B, [[0.0, 0.0], [0.7, 0.0]])
        np.testing.assert_array_equal(model.A, [[2.0], [1.0]])
        assert validate_model(model).valid

    def test_from_dag_rejects_cycles(self):
        B = np.array([[0.0, 0.5], [0.5, 0.0]])
        with pytest.raises(ModelValidationError, match="cyclic"):
            SemIcaModel.from_dag(np.eye(2), B)

    def test_canonical_rows(self):
        B = np.array([[0.0, 0.7], [0.0, 0.0]])
        model = SemIcaModel.from_dag(np.eye(2), B)
        np.testing.assert_array_equal(canonical_rows(model, [10.0, 20.0]), [20.0, 10.0])


class TestValidateModel:
    def test_valid_model(self, chain_model):
        report = validate_model(chain_model)
        assert report.valid
        assert report.summary() == "valid"

    def test_upper_triangular_b_reported(self):
        model = SemIcaModel(A=np.eye(2), B=np.array([[0.0, 0.5], [0.0, 0.0]]))
        report = validate_model(model)
        assert any("strictly lower triangular" in v for v in report.violations)

    def test_rank_deficient_a(self):
        A = np.array([[1.0, 2.0], [2.0, 4.0]])
        report = validate_model(SemIcaModel(A=A, B=np.zeros((2, 2))))
        assert any("rank deficient" in v for v in report.violations)

    def test_more_latents_than_observables(self):
        report = validate_model(SemIcaModel(A=np.ones((2, 3)), B=np.zeros((2, 2))))
        assert any("m exceeds n" in v for v in report.violations)

    def test_faithfulness(self):
        A = np.array([[1.0, 0.01], [0.0, 1.0]])
        report = validate_model(SemIcaModel(A=A, B=np.zeros((2, 2))))
        assert any("faithfulness" in v for v in report.violations)

    def test_latent_variance_must_be_one(self):
        model = SemIcaModel(A=np.eye(2), B=np.zeros((2, 2)), latent=LatentSpec(variance=2.0))
        assert not validate_model(model).valid

    def test_never_raises_on_non_finite(self):
        A = np.array([[np.nan, 0.0], [0.0, 1.0]])
        report = validate_model(SemIcaModel(A=A, B=np.zeros((2, 2))))
        assert any("non-finite" in v for v in report.violations)


class TestMixingMatrices:
    def test_two_variable_values(self, two_var_model):
        np.testing.assert_allclose(reduced_mixing(two_var_model), [[1.0, 0.0], [0.5, 1.0]])
        np.testing.assert_allclose(total_effects(two_var_model), [[1.0, 0.0], [0.5, 1.0]])
        np.testing.assert_allclose(response_matrix(two_var_model, 0), [[0.0, 0.0], [0.0, 1.0]])
        np.testing.assert_allclose(response_matrix(two_var_model, 1), [[1.0, 0.0], [0.0, 0.0]])

    def test_c_solves_structural_equation(self, chain_model):
        C = reduced_mixing(chain_model)
        np.testing.assert_allclose((np.eye(3) - chain_model.B) @ C, chain_model.A, atol=1e-12)

    def test_total_effects_unit_lower(self, chain_model):
        G = total_effects(chain_model)
        np.testing.assert_allclose(np.diag(G), 1.0)
        np.testing.assert_array_equal(np.triu(G, k=1), 0.0)
        # Chain: x0 reaches x2 through x1.
        assert G[2, 0] == pytest.approx(0.8 * -0.7)

    def test_response_row_is_zero(self, chain_model):
        for i in range(3):
            D = response_matrix(chain_model, i)
            np.testing.assert_array_equal(D[i], 0.0)

    def test_difference_is_rank_one(self, chain_model):
        C = reduced_mixing(chain_model)
        G = total_effects(chain_model)
        for i in range(3):
            F = C - response_matrix(chain_model, i)
            np.testing.assert_allclose(F, np.outer(G[:, i], C[i]), atol=1e-12)

    def test_intervened_matrices_zero_row(self, chain_model):
        A_1, B_1 = intervened_matrices(chain_model, 1)
        np.testing.assert_array_equal(A_1[1], 0.0)
        np.testing.assert_array_equal(B_1[1], 0.0)
        np.testing.assert_array_equal(B_1[2], chain_model.B[2])

    def test_index_out_of_range(self, chain_model):
        with pytest.raises(InterventionIndexError):
            response_matrix(chain_model, 3)

    def test_upper_b_rejected_by_solver(self):
        model = SemIcaModel(A=np.eye(2), B=np.array([[0.0, 0.5], [0.0, 0.0]]))
        with pytest.raises(ModelValidationError):
            reduced_mixing(model)


class TestColumnAlignment:
    def test_identity(self):
        alignment = ColumnAlignment.identity(3)
        assert alignment.is_identity
        M = np.arange(6.0).reshape(2, 3)
        np.testing.assert_array_equal(apply_alignment(M, alignment), M)

    def test_apply(self):
        M = np.array([[1.0, 2.0], [3.0, 4.0]])
        alignment = ColumnAlignment(perm=(1, 0), signs=[-1.0, 1.0], scales=[2.0, 1.0])
        np.testing.assert_array_equal(apply_alignment(M, alignment), [[-4.0, 1.0], [-8.0, 3.0]])

    def test_rejects_non_bijection(self):
        with pytest.raises(ModelValidationError):
            ColumnAlignment(perm=(0, 0), signs=[1.0, 1.0], scales=[1.0, 1.0])

    def test_rejects_bad_signs(self):
        with pytest.raises(ModelValidationError):
            ColumnAlignment(perm=(0, 1), signs=[1.0, 0.5], scales=[1.0, 1.0])

    def test_rejects_nonpositive_scales(self):
        with pytest.raises(ModelValidationError):
            ColumnAlignment(perm=(0, 1), signs=[1.0, 1.0], scales=[1.0, 0.0])

    def test_apply_dimension_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            apply_alignment(np.eye(3), ColumnAlignment.identity(2))

"""Tests for column alignment between C and the response matrices."""
import numpy as np
import pytest

from semica.alignment import align_columns, check_ambiguity, fit_alignments
from semica.errors import AlignmentAmbiguityError, DimensionMismatchError
from semica.model import apply_alignment, reduced_mixing, response_matrix


def _scramble(M, perm, signs):
    return M[:, list(perm)] * np.asarray(signs)[None, :]


class TestExactAlignment:
    @pytest.mark.parametrize("target", [0, 1, 2])
    def test_undoes_signed_permutation(self, chain_model, target):
        C = reduced_mixing(chain_model)
        D = response_matrix(chain_model, target)
        scrambled = _scramble(D, (2, 0, 1), (-1.0, 1.0, -1.0))
        (alignment,) = align_columns(C, [scrambled], mode="exact")
        np.testing.assert_allclose(apply_alignment(scrambled, alignment), D, atol=1e-12)
        np.testing.assert_array_equal(alignment.scales, 1.0)

    def test_identity_when_already_aligned(self, two_var_model):
        C = reduced_mixing(two_var_model)
        alignments = align_columns(C, [response_matrix(two_var_model, 0), response_matrix(two_var_model, 1)])
        assert all(al.is_identity for al in alignments)

    def test_one_alignment_per_matrix(self, chain_model):
        C = reduced_mixing(chain_model)
        D_list = [response_matrix(chain_model, t) for t in range(3)]
        assert len(align_columns(C, D_list)) == 3


class TestAlignmentFit:
    @pytest.mark.parametrize("target", [0, 1, 2])
    def test_population_minimiser_is_unique(self, chain_model, target):
        C = reduced_mixing(chain_model)
        scrambled = _scramble(response_matrix(chain_model, target), (1, 2, 0), (1.0, -1.0, -1.0))
        (fit,) = fit_alignments(C, [scrambled], mode="exact")
        assert fit.residual < 1e-20
        assert fit.runner_up > 1e-6
        assert not fit.is_tie()

    def test_equal_residuals_reported_as_tie(self):
        # Both sign choices on the second column leave C - D rank one.
        (fit,) = fit_alignments(np.eye(2), [np.diag([1.0, -1.0])], mode="exact")
        assert fit.residual == pytest.approx(0.0, abs=1e-24)
        assert fit.is_tie()

    def test_reference_separates_tied_alignments(self):
        reference = np.diag([1.0, -1.0])
        (fit,) = fit_alignments(np.eye(2), [reference], mode="exact", references=[reference])
        assert fit.alignment.is_identity
        assert fit.runner_up == pytest.approx(4.0)
        assert not fit.is_tie()

    def test_reference_overrides_near_parallel_swap(self):
        # Columns nearly opposite: swapping them with both signs flipped is almost as rank one.
        C = np.array([[1.0, 0.6], [0.0, 1.32], [0.8, -1.556]])
        D = np.array([[0.0, 0.0], [-0.7, 0.9], [1.36, -1.22]])
        swapped = _scramble(D, (1, 0), (-1.0, -1.0))
        rng = np.random.default_rng(3)
        noisy = swapped + 0.02 * rng.standard_normal(swapped.shape)
        noisy[0] = 0.0
        (fit,) = fit_alignments(C, [noisy], mode="exact", references=[D])
        np.testing.assert_allclose(apply_alignment(noisy, fit.alignment), D, atol=0.1)

    def test_greedy_matches_reference(self):
        rng = np.random.default_rng(1)
        C = rng.standard_normal((4, 3))
        reference = rng.standard_normal((4, 3))
        D = _scramble(reference, (2, 0, 1), (1.0, 1.0, -1.0)) * np.array([0.5, 2.0, 3.0])[None, :]
        (fit,) = fit_alignments(C, [D], mode="greedy", references=[reference])
        np.testing.assert_allclose(apply_alignment(D, fit.alignment), reference, atol=1e-10)

    def test_reference_shape_checked(self):
        with pytest.raises(DimensionMismatchError):
            fit_alignments(np.eye(2), [np.eye(2)], references=[np.eye(3)])

    def test_reference_count_checked(self):
        with pytest.raises(DimensionMismatchError):
            fit_alignments(np.eye(2), [np.eye(2)], references=[])


class TestGreedyAlignment:
    def _scaled_copy(self):
        rng = np.random.default_rng(0)
        C = rng.standard_normal((4, 3))
        factors = np.array([2.0, 0.5, 1.5])
        D = _scramble(C, (1, 2, 0), (1.0, -1.0, 1.0)) * factors[None, :]
        return C, D + 1e-4 * rng.standard_normal(D.shape)

    def test_recovers_permutation_sign_and_scale(self):
        C, D = self._scaled_copy()
        (alignment,) = align_columns(C, [D], mode="greedy")
        np.testing.assert_allclose(apply_alignment(D, alignment), C, atol=1e-3)

    def test_auto_switches_to_greedy_above_exact_limit(self):
        C, D = self._scaled_copy()
        (alignment,) = align_columns(C, [D], mode="auto", exact_limit=2)
        assert not np.allclose(alignment.scales, 1.0)

    def test_auto_uses_exact_within_limit(self):
        C, D = self._scaled_copy()
        (alignment,) = align_columns(C, [D], mode="auto", exact_limit=3)
        np.testing.assert_array_equal(alignment.scales, 1.0)


class TestChecks:
    def test_parallel_columns_are_ambiguous(self):
        D = np.array([[1.0, -2.0, 0.0], [2.0, -4.0, 1.0]])
        with pytest.raises(AlignmentAmbiguityError) as exc_info:
            check_ambiguity(D)
        assert exc_info.value.pair == (0, 1)

    def test_zero_columns_ignored(self):
        check_ambiguity(np.array([[1.0, 0.0, 0.0], [0.0, 0.0, 0.0]]))

    def test_ambiguity_raised_by_align(self):
        C = np.eye(2)
        with pytest.raises(AlignmentAmbiguityError):
            align_columns(C, [np.array([[1.0, 1.0], [1.0, 1.0]])])

    def test_shape_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            align_columns(np.eye(3), [np.eye(2)])

    def test_unknown_mode(self):
        with pytest.raises(ValueError, match="Unknown alignment mode"):
            align_columns(np.eye(2), [np.eye(2)], mode="fuzzy")

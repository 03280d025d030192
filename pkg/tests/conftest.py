"""Shared test fixtures and helpers for the semica test suite.

This module provides small hand-built models used across test files.
See tests/README.md for testing patterns and tolerances.
"""
import numpy as np
import pytest

from semica.model import SemIcaModel
from semica.types import LatentFamily, LatentSpec


def pytest_configure(config):
    config.addinivalue_line(
        "markers",
        "slow: sample-size sweeps and other long statistical runs",
    )


@pytest.fixture
def two_var_model():
    """x0 = h0, x1 = h1 + 0.5 x0.

    The smallest model with an edge: A = I, B[1, 0] = 0.5. Every matrix the
    pipeline derives from it can be written down by hand:

        C   = [[1, 0], [0.5, 1]]
        D_0 = [[0, 0], [0, 1]]
        D_1 = [[1, 0], [0, 0]]

    Use it when a test needs exact expected values.
    """
    return SemIcaModel(A=np.eye(2), B=np.array([[0.0, 0.0], [0.5, 0.0]]))


@pytest.fixture
def chain_model():
    """Three-variable chain x0 -> x1 -> x2 with a dense, full-rank A."""
    A = np.array(
        [
            [1.0, 0.6, -0.7],
            [-0.8, 0.9, 0.5],
            [0.7, -0.6, 1.0],
        ]
    )
    B = np.array(
        [
            [0.0, 0.0, 0.0],
            [0.8, 0.0, 0.0],
            [0.0, -0.7, 0.0],
        ]
    )
    return SemIcaModel(A=A, B=B)


@pytest.fixture
def rademacher_model(two_var_model):
    """two_var_model with symmetric +-1 latents (negative kurtosis)."""
    return SemIcaModel(
        A=two_var_model.A,
        B=two_var_model.B,
        latent=LatentSpec(family=LatentFamily.RADEMACHER, mean=0.0),
    )


def balanced_signs(m: int) -> np.ndarray:
    """All 2^m sign patterns: a perfectly balanced Rademacher sample."""
    grid = np.array(np.meshgrid(*([[-1.0, 1.0]] * m), indexing="ij"))
    return grid.reshape(m, -1).T

import numpy as np
import pytest

from spp.problem import (SaddlePointProblem, box, dense, quadratic_smooth, zero_simple)


@pytest.fixture
def toy1d():
    """X = Y = [-1, 1], G = x^2/2, K = 1, J = 0."""
    return SaddlePointProblem(quadratic_smooth(np.array([[1.0]])), dense(np.array([[1.0]])),
                              zero_simple(1), box([-1.0], [1.0]), box([-1.0], [1.0]),
                              L_G=1.0, L_K=1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)

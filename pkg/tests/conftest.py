import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_spd(rng, n, scale=1.0):
    a = rng.standard_normal((n, n + 2))
    return scale * (a @ a.T) / (n + 2)


def random_simplex(rng, shape, alpha=1.0):
    """Dirichlet rows with the last axis as the simplex."""
    g = rng.gamma(alpha, size=shape)
    return g / g.sum(axis=-1, keepdims=True)

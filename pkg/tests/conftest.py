import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def random_features(rng, n=None):
    shape = (16,) if n is None else (n, 16)
    return rng.uniform(-1.0, 1.0, size=shape)

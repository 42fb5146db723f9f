import numpy as np
import pytest

from facelayers import synthetic_model


@pytest.fixture(scope="session")
def small_model():
    """Shared 32x32 synthetic model, large enough for full-rank bases."""
    return synthetic_model(3, vertices=160, resolution=32)


@pytest.fixture()
def rng():
    return np.random.default_rng(0)

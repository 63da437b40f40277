import numpy as np
import pytest
from hypothesis import settings

from gcalc import GParams, make_grid, sample_path

settings.register_profile("gcalc", deadline=None, max_examples=60, derandomize=True)
settings.load_profile("gcalc")


@pytest.fixture
def band():
    return GParams(0.5, 1.0)


@pytest.fixture
def classical():
    return GParams(1.0, 1.0)


@pytest.fixture
def toy_path():
    """dt = 1, sigma = (1, 2), xi = (1, -1): values (0, 1, -1), qv (0, 1, 5)."""
    grid = make_grid(2.0, 2)
    return sample_path(np.array([1.0, 2.0]), np.array([1.0, -1.0]), grid)

import numpy as np
import pytest

from habitat_opt.grid import build_grid


@pytest.fixture
def grid1d():
    return build_grid(1, (1.0,), (256,))


@pytest.fixture
def grid2d():
    return build_grid(2, (1.0, 1.0), (32, 32))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)

import numpy as np
import pytest

from suncross import scenarios
from suncross.grid import Grid
from suncross.spectral import build_decomposition
from suncross.verify import wright_model


@pytest.fixture(scope="session")
def grid():
    return Grid(1.0, 20)


@pytest.fixture(scope="session")
def hayes_dec():
    return build_decomposition(scenarios.hayes(), seed=0)


@pytest.fixture(scope="session")
def mixed_dec():
    return build_decomposition(scenarios.mixed3d(), seed=0)


@pytest.fixture(scope="session")
def model():
    return wright_model(0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)

import numpy as np
import pytest

from fracbubbles.core import ProblemParams, make_config


@pytest.fixture(scope="session")
def params():
    return ProblemParams()


@pytest.fixture(scope="session")
def cfg8(params):
    return make_config(params, 8, 1.0)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)

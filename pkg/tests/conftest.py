import numpy as np
import pytest

from jetspray.spray import (constant_curvature_spray, damped_semispray,
                            flat_spray)


@pytest.fixture(scope="session")
def flat2():
    return flat_spray(2)


@pytest.fixture(scope="session")
def flat3():
    return flat_spray(3)


@pytest.fixture(scope="session")
def sphere2():
    return constant_curvature_spray(2, 1.0)


@pytest.fixture(scope="session")
def hyper2():
    return constant_curvature_spray(2, -1.0)


@pytest.fixture(scope="session")
def damped2():
    return damped_semispray(2, 1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(42)

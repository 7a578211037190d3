import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from bartnik.schwarzschild import Background
from bartnik.spaces import RadialGrid
from bartnik.sphharm import SphBasis

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def bg():
    return Background(m0=1.0, n=3.0)


@pytest.fixture(scope="session")
def grid(bg):
    return RadialGrid(bg.r0, 64)


@pytest.fixture(scope="session")
def grid96(bg):
    return RadialGrid(bg.r0, 96)


@pytest.fixture(scope="session")
def basis4():
    return SphBasis(4)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)

import numpy as np
import pytest

from landaulab.kernel import CollisionKernel
from landaulab.vgrid import VelocityGrid, discretized_maxwellian


@pytest.fixture(scope="session")
def kernel():
    return CollisionKernel(1.0)


@pytest.fixture(scope="session")
def grid12():
    return VelocityGrid(12, 6.0)


@pytest.fixture(scope="session")
def grid16():
    return VelocityGrid(16, 6.0)


@pytest.fixture(scope="session")
def mu12(grid12):
    return discretized_maxwellian(grid12)


@pytest.fixture()
def rng():
    return np.random.default_rng(12345)

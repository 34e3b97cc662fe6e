import numpy as np
import pytest

from floer_eig.box import solve_box
from floer_eig.core import HamiltonianParams, PotentialSpec
from floer_eig.ring import all_periodic_taus, floquet_scan, solve_ring_at


@pytest.fixture(scope="session")
def mathieu():
    return PotentialSpec.fourier(0.3, [0.1])


@pytest.fixture(scope="session")
def free():
    return PotentialSpec.constant(0.0)


@pytest.fixture(scope="session")
def unit():
    return HamiltonianParams(1.0)


@pytest.fixture(scope="session")
def mathieu_taus(unit, mathieu):
    return all_periodic_taus(unit, mathieu, floquet_scan(unit, mathieu))


@pytest.fixture(scope="session")
def mathieu_ring(unit, mathieu, mathieu_taus):
    return solve_ring_at(unit, mathieu, mathieu_taus[0])


@pytest.fixture(scope="session")
def mathieu_box(unit, mathieu):
    return solve_box(unit, mathieu, 1)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)

import numpy as np
import pytest

from slabspectra import CollisionKernel, Profile, SpectralSolver, build_grid


@pytest.fixture(scope="session")
def unit_step():
    return Profile.step(1.0)


@pytest.fixture(scope="session")
def zero_profile():
    return Profile(((-1.0, 1.0, 0.0),))


@pytest.fixture(scope="session")
def two_bump_profile():
    return Profile(((-1.5, -0.5, 0.8), (0.25, 1.0, 1.6)))


@pytest.fixture(scope="session")
def aniso_kernel():
    return CollisionKernel.legendre([1.0, 0.6], [0, 1])


@pytest.fixture(scope="session")
def solver64(unit_step):
    return SpectralSolver(unit_step, build_grid(unit_step, 64))


@pytest.fixture(scope="session")
def solver128(unit_step):
    return SpectralSolver(unit_step, build_grid(unit_step, 128))


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240817)

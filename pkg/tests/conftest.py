import numpy as np
import pytest

from levylab import coeffs, levy
from levylab.flow import SimConfig


@pytest.fixture(scope="session")
def model1d():
    return levy.LevyModel(dim=1, alpha=1.0, delta=1.0, trunc_low=0.1)


@pytest.fixture(scope="session")
def model1d_fine():
    return levy.LevyModel(dim=1, alpha=1.0, delta=1.0, trunc_low=0.02)


@pytest.fixture(scope="session")
def model2d():
    return levy.LevyModel(dim=2, alpha=0.5, delta=1.0, trunc_low=0.1)


@pytest.fixture(scope="session")
def additive1d():
    return coeffs.additive(1)


@pytest.fixture(scope="session")
def kinetic():
    return coeffs.kinetic()


@pytest.fixture(scope="session")
def sine1d():
    return coeffs.sine1d()


def rng_for(seed=0, index=0):
    key = np.array([seed, index], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


@pytest.fixture
def base_cfg():
    return SimConfig(t_end=1.0, dt_max=1e-3, n_paths=1, seed=0)

import numpy as np
import pytest

from eymlab.algebra import su2, u1
from eymlab.eym import EymConfig
from eymlab.fields import flat_metric, increasing_indices
from eymlab.gauge import flat_connection, u1_flux_connection
from eymlab.lattice import Grid


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def grid2():
    return Grid((8, 8), (1.0, 1.0))


@pytest.fixture
def grid3():
    return Grid((8, 8, 8), (1.0, 1.0, 1.0))


@pytest.fixture
def grid3_fine():
    return Grid((16, 16, 16), (1.0, 1.0, 1.0))


@pytest.fixture
def grid4():
    return Grid((6, 6, 6, 6), (1.0, 1.0, 1.0, 1.0))


def asd_flux_components(n=4, dim=1):
    """Increasing-index components of dx1^dx2 - dx3^dx4."""
    idx = increasing_indices(n, 2)
    f0 = np.zeros((len(idx), dim))
    f0[idx.index((0, 1)), 0] = 1.0
    f0[idx.index((2, 3)), 0] = -1.0
    return f0


@pytest.fixture
def instanton_pair(grid4):
    """Flat metric with the constant anti-self-dual abelian flux on T^4."""
    g = flat_metric(grid4)
    A = u1_flux_connection(grid4, u1(), asd_flux_components())
    return g, A, EymConfig(kappa=-1, algebra=u1())


@pytest.fixture
def flat_pair3(grid3):
    g = flat_metric(grid3)
    A = flat_connection(grid3, su2())
    return g, A, EymConfig(kappa=-1, algebra=su2())

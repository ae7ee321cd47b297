import numpy as np
import pytest
import scipy.sparse as sp

from dqnsbl.objective import DesignMatrix, MapObjective


def random_objective(rng, n=None, m=None, sparse=False, scale=1.0):
    """A random logistic MAP problem with N <= 50 rows and M <= 20 features."""
    n = n or int(rng.integers(5, 51))
    m = m or int(rng.integers(1, 21))
    X = rng.standard_normal((n, m))
    if sparse:
        X[rng.random((n, m)) < 0.6] = 0.0
        X = sp.csr_matrix(X)
    t = (rng.random(n) < 0.5).astype(float)
    alpha = rng.uniform(0.01, 3.0, size=m + 1)
    obj = MapObjective(DesignMatrix(X), t, alpha)
    w = scale * rng.standard_normal(m + 1)
    return obj, w


@pytest.fixture
def rng():
    return np.random.default_rng(20240917)


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running reproduction checks")

import numpy as np
import pytest


def central_diff(f, x, step=1e-5):
    """Central finite-difference gradient of a scalar function on a vector."""
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    for i in range(len(x)):
        e = np.zeros_like(x)
        e[i] = step
        g[i] = (f(x + e) - f(x - e)) / (2 * step)
    return g


def central_diff_jac(f, x, step=1e-5):
    """Central finite-difference Jacobian of a vector function on a vector."""
    x = np.asarray(x, dtype=np.float64)
    f0 = np.asarray(f(x))
    J = np.zeros((len(f0), len(x)))
    for i in range(len(x)):
        e = np.zeros_like(x)
        e[i] = step
        J[:, i] = (np.asarray(f(x + e)) - np.asarray(f(x - e))) / (2 * step)
    return J


@pytest.fixture
def rng():
    return np.random.default_rng(12345)

import numpy as np
import pytest

from wfdual.model import ModelParams


def fig1_coupling(j1=2.0, j2=2.0):
    J = np.zeros((4, 4))
    J[0, 2] = J[2, 0] = j1
    J[1, 3] = J[3, 1] = j2
    return J


@pytest.fixture(scope="session")
def fig1_right():
    return ModelParams.make((2, 2), [[0.8, 0.8], [0.8, 0.8]], J=fig1_coupling(2.0, 2.0))


@pytest.fixture(scope="session")
def fig1_left():
    return ModelParams.make((2, 2), [[0.8, 0.8], [0.8, 0.8]])


@pytest.fixture(scope="session")
def single_sel():
    # the one-locus two-allele configuration with selection used throughout
    return ModelParams.make((2,), [[0.5, 0.5]], h=[1.0, 0.0])


@pytest.fixture(scope="session")
def neutral_single():
    return ModelParams.make((2,), [[0.5, 0.5]])


def random_simplex(rng, alleles, low=0.05):
    """A strictly interior random point of the product of simplices."""
    parts = []
    for m in alleles:
        v = rng.uniform(low, 1.0, m)
        parts.append(v / v.sum())
    return np.concatenate(parts)


def random_dual_state(rng, M, max_total):
    n = rng.integers(0, max_total + 1, M)
    while n.sum() == 0 or n.sum() > max_total:
        n = rng.integers(0, max_total + 1, M)
    return n

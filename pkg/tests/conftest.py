import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    from renyisharp.linalg import SeededRng

    return SeededRng(20240601)


def random_symmetric(rng, n):
    a = rng.normal((n, n))
    return 0.5 * (a + a.T)


@pytest.fixture
def sym():
    return random_symmetric


def pytest_configure(config):
    np.set_printoptions(precision=6)

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from plregions.data import find_mnist
from plregions.netgen import InitSpec, he_init

settings.register_profile("default", deadline=None, max_examples=30,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

MNIST_DIR = find_mnist()
needs_mnist = pytest.mark.skipif(MNIST_DIR is None, reason="MNIST files not found")


def small_net(sizes=(3, 5, 4, 2), seed=0, bias_sd=0.5):
    return he_init(InitSpec(sizes, bias_sd, seed=seed))


@pytest.fixture
def net3():
    return small_net()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("pamlab", deadline=None, max_examples=200,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("pamlab")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def bits(x):
    return np.asarray(x, dtype=np.float32).view(np.uint32)


def same_bits(a, b):
    return np.array_equal(bits(a), bits(b))

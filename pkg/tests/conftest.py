import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "concert", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("concert")


@pytest.fixture
def rng():
    return np.random.Generator(np.random.Philox(12345))


def gaussian_data(rng, n, beta, sigma=1.0):
    from concert import Dataset

    beta = np.asarray(beta, dtype=float)
    X = rng.standard_normal((n, beta.size))
    return Dataset(X, X @ beta + sigma * rng.standard_normal(n))


def logistic_data(rng, n, beta):
    from concert import Dataset

    beta = np.asarray(beta, dtype=float)
    X = rng.standard_normal((n, beta.size))
    y = (rng.random(n) < 1.0 / (1.0 + np.exp(-X @ beta))).astype(float)
    return Dataset(X, y)

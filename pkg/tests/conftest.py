import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from surveyopt.data import PreSample

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def make_sample(x, y, names=None):
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    names = names or [f"x{j}" for j in range(x.shape[1])]
    return PreSample(np.asarray(y, float), x, names, ["y"])


def orthonormal_design(rng, n, m):
    """Centered columns with X'X/N = I."""
    z = rng.standard_normal((n, m))
    z -= z.mean(axis=0)
    q, _ = np.linalg.qr(z)
    return q * np.sqrt(n)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)

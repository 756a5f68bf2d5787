import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_classical(rng, N, low=0.05):
    return rng.uniform(low, 1.0, (N, N))


def random_orthogonal(rng, N):
    Q, R = np.linalg.qr(rng.normal(size=(N, N)))
    return Q * np.sign(np.diag(R))

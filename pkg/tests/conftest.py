import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_positive(rng, N, scale=1.0):
    A = rng.standard_normal((N, N)) + 1j * rng.standard_normal((N, N))
    H = scale * (A + A.conj().T) / 2
    w, V = np.linalg.eigh(H)
    w = w - w.mean()
    return (V * np.exp(w)) @ V.conj().T

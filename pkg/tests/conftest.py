import numpy as np
import pytest


def rand_orth(n, k, seed=0):
    rng = np.random.default_rng(seed)
    q, _ = np.linalg.qr(rng.standard_normal((n, k)))
    return q


def rand_rot(k, rng):
    q, _ = np.linalg.qr(rng.standard_normal((k, k)))
    return q


def rand_spd(n, rng, shift=None):
    w = rng.standard_normal((n, n))
    return w @ w.T + (shift if shift is not None else n) * np.eye(n)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)

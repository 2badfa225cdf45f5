import numpy as np
import pytest

from bayesmarx import MnwBelief


def random_spd(rng, d, jitter=0.5):
    G = rng.standard_normal((d, d))
    return G @ G.T / d + jitter * np.eye(d)


def random_belief(rng, d_x, d_y, nu_extra=None):
    nu = d_y + 1 + (rng.uniform(0.5, 5.0) if nu_extra is None else nu_extra)
    return MnwBelief(
        rng.standard_normal((d_x, d_y)),
        random_spd(rng, d_x),
        random_spd(rng, d_y),
        nu,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(12345)

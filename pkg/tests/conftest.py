import numpy as np
import pytest

from foldcrf.anglemodel import AngleModel, Observation


def random_observation(n, rng):
    return Observation(rng.normal(size=(n, 20)) * 3, rng.dirichlet(np.ones(3), n))


def random_model(kind, n_states, rng, w=4, n_gates=3, scale=0.5):
    m = AngleModel(kind, n_states, w, n_gates if kind == "CNF" else 0)
    return m.with_params(scale * rng.standard_normal(m.params.size))


def random_rotation(rng):
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


@pytest.fixture
def rng():
    return np.random.default_rng(12345)

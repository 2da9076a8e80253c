import numpy as np
import pytest

from tactilewbc.control import default_gains
from tactilewbc.model import JointState, default_robot
from tactilewbc.taxels import default_taxel_array


@pytest.fixture(scope="session")
def model():
    return default_robot()


@pytest.fixture(scope="session")
def gains():
    return default_gains()


@pytest.fixture(scope="session")
def array():
    return default_taxel_array()


def random_states(model, n, seed=0, speed=1.0):
    """Random in-limit joint states, away from the extremes."""
    rng = np.random.default_rng(seed)
    lo = model.q_min + 0.1 * (model.q_max - model.q_min)
    hi = model.q_max - 0.1 * (model.q_max - model.q_min)
    out = []
    for _ in range(n):
        out.append(JointState(
            q_B=rng.uniform([-1.0, -1.0, -np.pi], [1.0, 1.0, np.pi]),
            dq_B=speed * rng.uniform(-0.5, 0.5, 3),
            q_A=rng.uniform(lo, hi),
            dq_A=speed * rng.uniform(-1.0, 1.0, 7),
        ))
    return out

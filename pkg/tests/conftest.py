import numpy as np
import pytest

from boundlab.model import load_model


@pytest.fixture(scope="session")
def model():
    return load_model()


@pytest.fixture()
def rng():
    return np.random.default_rng(12345)


def random_configuration(rng, model, base_height=1.0):
    """Random in-limits configuration with a lifted base."""
    q = np.empty(18)
    q[0:3] = rng.uniform(-1.0, 1.0, 3)
    q[2] = base_height + rng.uniform(0.0, 0.5)
    q[3] = rng.uniform(-0.6, 0.6)   # roll
    q[4] = rng.uniform(-0.9, 0.9)   # pitch, well inside the singularity
    q[5] = rng.uniform(-np.pi, np.pi)
    for leg in range(4):
        for j in range(3):
            q[6 + 3 * leg + j] = rng.uniform(model.joint_lower[j],
                                             model.joint_upper[j])
    return q

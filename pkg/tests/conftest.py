import numpy as np
import pytest
from hypothesis import settings

from dualarm.frames import Transform, rot_z
from dualarm.kinematics import default_chain, make_serial_chain

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


@pytest.fixture(scope="session")
def chain_a():
    return default_chain("arm_1")


@pytest.fixture(scope="session")
def chain_b():
    return default_chain("arm_2")


@pytest.fixture(scope="session")
def far_chain_b():
    """arm_2 geometry with its base moved 10 m away."""
    base = Transform(rot_z(np.pi), [10.0, 0.0, 0.0])
    return make_serial_chain(
        [0.10, 0.25, 0.10, 0.22, 0.08, 0.12],
        [0.05, 0.05, 0.045, 0.045, 0.04, 0.04],
        base=base,
        name="arm_2_far",
    )


@pytest.fixture
def rng():
    return np.random.default_rng(12345)

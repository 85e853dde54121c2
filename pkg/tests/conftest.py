import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from palmplan import default_scene

settings.register_profile(
    "default", deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture(scope="session")
def scene():
    return default_scene()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_transform(rng, max_translation=1.0):
    from palmplan import RigidTransform

    q = rng.normal(size=4)
    return RigidTransform(q, rng.uniform(-max_translation, max_translation, 3))


def random_cloud(rng, n=100, scale=1.0):
    from palmplan import PointCloud

    return PointCloud(rng.uniform(-scale, scale, (n, 3)))

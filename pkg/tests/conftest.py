import math

import pytest
from hypothesis import HealthCheck, settings

from shrinkers.surface import GeneralizedCylinderSpec, analytic_shrinker

settings.register_profile("default", deadline=None, max_examples=25,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def ratio(errors):
    """Successive error ratios of a refinement sequence."""
    return [a / b for a, b in zip(errors[:-1], errors[1:])]


@pytest.fixture(scope="session")
def cylinder12():
    return analytic_shrinker(GeneralizedCylinderSpec(1, 2), 512)


@pytest.fixture(scope="session")
def sphere22():
    return analytic_shrinker(GeneralizedCylinderSpec(2, 2), 512)


@pytest.fixture(scope="session")
def plane2():
    return analytic_shrinker(GeneralizedCylinderSpec(0, 2), 512)


SQRT2 = math.sqrt(2)

import os

import pytest
from hypothesis import HealthCheck, settings

from dnalpha.grid import Grid
from dnalpha.params import REF, REF_TIME

settings.register_profile(
    "repo", deadline=None, derandomize=True, max_examples=60,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "repo"))


@pytest.fixture(scope="session")
def ref():
    return REF


@pytest.fixture(scope="session")
def ref_time():
    return REF_TIME


@pytest.fixture(scope="session")
def coarse_grid():
    return Grid(24, 6)


@pytest.fixture(scope="session")
def default_grid():
    return Grid()

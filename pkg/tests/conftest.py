import pytest
from hypothesis import HealthCheck, settings

from fracbubble import FracParams, resolve_constants
from fracbubble.green import BallTable

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.function_scoped_fixture])
settings.load_profile("default")


@pytest.fixture(scope="session")
def desk():
    return FracParams(1, 0.3)


@pytest.fixture(scope="session")
def consts(desk):
    return resolve_constants(desk)


@pytest.fixture(scope="session")
def consts2():
    return resolve_constants(FracParams(2, 0.5))


@pytest.fixture(scope="session")
def ball(consts):
    return BallTable(consts)

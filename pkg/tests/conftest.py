import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from vlt2.core import GridSpec, VLineGeometry

settings.register_profile("vlt2", deadline=None, max_examples=25, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("vlt2")


@pytest.fixture(scope="session")
def grid64():
    return GridSpec.square(64)


@pytest.fixture(scope="session")
def grid128():
    return GridSpec.square(128)


@pytest.fixture(params=[0.6, 0.8], ids=["hyperbolic", "elliptic"])
def geom(request):
    return VLineGeometry(request.param)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# acceptance lines, collected by test_acceptance and shown after the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)

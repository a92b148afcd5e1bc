import math

import pytest

from macrobell.bell import BellSettings

STANDARD_ANGLES = BellSettings(theta=0.0, theta_prime=math.pi / 2, phi=-math.pi / 4, phi_prime=-3 * math.pi / 4)

_ACCEPTANCE_KEY = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE_KEY] = []


@pytest.fixture
def standard_angles():
    return STANDARD_ANGLES


@pytest.fixture
def acceptance_log(request):
    return request.config.stash[_ACCEPTANCE_KEY]


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE_KEY, [])
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for line in lines:
        terminalreporter.write_line(line)

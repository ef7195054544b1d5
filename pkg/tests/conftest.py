import numpy as np
import pytest
from hypothesis import settings

from poissonpath.feed_field import CutterSpec
from poissonpath.mesh_core import analytic_test_surface

settings.register_profile("default", max_examples=30, deadline=None)
settings.load_profile("default")

BALL5 = CutterSpec("ball", 5.0)
FLAT2 = CutterSpec("flat", 2.0, inclination=30.0)


@pytest.fixture(scope="session")
def plane():
    return analytic_test_surface("plane", {}, 10)


@pytest.fixture(scope="session")
def fine_plane():
    return analytic_test_surface("plane", {}, 20)


@pytest.fixture(scope="session")
def cylinder():
    # edge about 0.49 mm around, 0.5 mm along the axis
    return analytic_test_surface("cylinder", {"n_around": 64, "n_axial": 40}, 64)


@pytest.fixture(scope="session")
def saddle():
    return analytic_test_surface("saddle", {}, 20)


@pytest.fixture(scope="session")
def saddle40():
    return analytic_test_surface("saddle", {}, 40)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def acceptance_log():
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)

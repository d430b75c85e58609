import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from fracflow.grid import Interval, build_grid, build_kernel

settings.register_profile(
    "default",
    max_examples=40,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.register_profile("ci", max_examples=200, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def line_grid():
    """Interval (-1, 1) with 19 interior nodes."""
    return build_grid(Interval(-1.0, 1.0), 0.1, 2.5)


@pytest.fixture(scope="session")
def line_kernel2(line_grid):
    return build_kernel(line_grid, 0.5, 2.0)


@pytest.fixture(scope="session")
def line_kernel3(line_grid):
    return build_kernel(line_grid, 0.5, 3.0)

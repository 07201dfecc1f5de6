import sys

import numpy as np
import pytest

from comonotone.corpus import get_entry
from comonotone.trigpoly import BreakpointSet

HALF_PI = 0.5 * np.pi


@pytest.fixture(scope="session")
def Y1():
    return BreakpointSet([HALF_PI, -HALF_PI])


@pytest.fixture(scope="session")
def Y2():
    return BreakpointSet([-2.0, -1.0, 0.5, 2.0])


@pytest.fixture(scope="session")
def neg_sin():
    return get_entry("neg_sin")


@pytest.fixture(scope="session")
def warped():
    return get_entry("neg_sin_warped")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for k in sorted(results):
            terminalreporter.write_line(results[k])

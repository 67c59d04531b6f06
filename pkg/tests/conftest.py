import sys

import numpy as np
import pytest

from coral.graph import ring
from coral.problem import generate_classification, quadratic_problem


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_quadratic(rng):
    return quadratic_problem(rng.standard_normal((5, 3)))


@pytest.fixture
def small_classification():
    return generate_classification(4, 3, 20, 0.01, seed=7)


@pytest.fixture
def ring5():
    return ring(5)


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    lines = getattr(module, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)

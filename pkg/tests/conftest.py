import math

import numpy as np
import pytest

from dbarflow.rng import SplitMix64

SQUARE_ALPHA = math.exp(2.0 * math.pi)  # makes the log-coordinate torus square

# (criterion, verdict line) pairs filled in by test_acceptance.py
ACCEPTANCE = []


@pytest.fixture
def rng():
    return SplitMix64(20240601)


@pytest.fixture
def e4():
    return np.eye(4)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for _, line in sorted(ACCEPTANCE, key=lambda x: x[0]):
        terminalreporter.write_line(line)

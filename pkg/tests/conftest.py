import warnings

import numpy as np
import pytest

from entlogdet import SparseSymMatrix


@pytest.fixture
def tridiag3():
    return SparseSymMatrix.from_dense(np.array([[2.0, -1, 0], [-1, 2, -1], [0, -1, 2]]))


@pytest.fixture
def quiet():
    """Silence the package's informational RuntimeWarnings inside a test."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        yield


def random_spd(n, seed, shift=0.5):
    G = np.random.default_rng(seed).standard_normal((n, n))
    return G @ G.T / n + shift * np.eye(n)


# one line per acceptance criterion, printed after the test session
ACCEPTANCE_LINES = {}


def record_criterion(number, passed, detail, status=None):
    line = f"criterion {number}: {status or ('PASS' if passed else 'FAIL')}  {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE_LINES, key=str):
            terminalreporter.write_line(ACCEPTANCE_LINES[key])

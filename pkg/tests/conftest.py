import numpy as np
import pytest

from nssvm.dataset import Dataset


def random_instance(rng, m, n, sparse=False):
    """Random labelled data with both classes present."""
    X = rng.normal(size=(m, n))
    if sparse:
        X[rng.random((m, n)) < 0.8] = 0.0
    y = np.where(rng.random(m) < 0.5, 1.0, -1.0)
    y[0], y[-1] = 1.0, -1.0
    return Dataset(X, y)


def dense_Q(d):
    return (d.dense() * d.y[:, None]).T


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


ACCEPTANCE_LINES = {}


def report_criterion(number, passed, detail):
    """Record one result line; ``passed=None`` marks a skipped criterion."""
    word = "SKIP" if passed is None else "PASS" if passed else "FAIL"
    line = f"criterion {number:>2}: {word}  {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])

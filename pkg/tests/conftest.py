import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_joint(rng, rows, cols, full_support=True):
    """Random discrete joint from a flat Dirichlet."""
    p = rng.dirichlet(np.ones(rows * cols)).reshape(rows, cols)
    if full_support:
        p = p + 1e-3
        p /= p.sum()
    return p


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import REPORT
    except ImportError:
        return
    if REPORT:
        terminalreporter.section("acceptance criteria")
        for line in REPORT:
            terminalreporter.write_line(line)

import numpy as np
import pytest

# One line per acceptance criterion, echoed after the run by the hook below.
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_joint(rng, m):
    """Strictly positive symmetric joint distribution with zero diagonal."""
    a = rng.uniform(0.1, 1.0, size=(m, m))
    a = a + a.T
    np.fill_diagonal(a, 0.0)
    return a / a.sum()


def central_difference(fn, x, h):
    grad = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        old = x[idx]
        x[idx] = old + h
        up = fn(x)
        x[idx] = old - h
        down = fn(x)
        x[idx] = old
        grad[idx] = (up - down) / (2 * h)
    return grad

import numpy as np
import pytest


def low_rank(rng, m, n, r):
    """Gaussian m x n matrix of rank exactly r (almost surely)."""
    return rng.standard_normal((m, r)) @ rng.standard_normal((r, n))


def naive_at_x(A, X):
    m, n = A.shape
    p = X.shape[1]
    Y = np.zeros((n, p))
    for j in range(n):
        for i in range(p):
            s = 0.0
            for r in range(m):
                s += A[r, j] * X[r, i]
            Y[j, i] = s
    return Y


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# Acceptance criteria report one line each; collected here and echoed at the
# end of the session regardless of -s.
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

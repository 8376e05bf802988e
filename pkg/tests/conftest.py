from pathlib import Path

import numpy as np
import pytest

DATA = Path(__file__).parent / "data"


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def frame_8x16():
    # low-coherence 8x16 frame: a local minimizer of 2*gamma_2^2 + delta_2^2
    # started from a Gaussian matrix (delta_2 ~ 0.29, gamma_2 ~ 0.65)
    return np.load(DATA / "frame_8x16.npy")


def gram_schmidt(X, tol=1e-10):
    """Modified Gram-Schmidt; drops columns that become negligible."""
    basis = []
    scale = np.linalg.norm(X)
    for j in range(X.shape[1]):
        v = X[:, j].astype(float).copy()
        for q in basis:
            v -= (q @ v) * q
        n = np.linalg.norm(v)
        if n > tol * scale:
            basis.append(v / n)
    return np.column_stack(basis)


# one "PASS/FAIL [n] ..." line per acceptance criterion, echoed after the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)

from __future__ import annotations

import numpy as np
import pytest

from datasplit.data import RidgeProblem, gen_synthetic, spectral_constants
from datasplit.model import ProblemConstants


@pytest.fixture(scope="session")
def small_ridge():
    """d=5, N=100, lambda=0.1 synthetic instance."""
    problem = RidgeProblem(gen_synthetic(100, 5, 0.1, seed=0), 0.1)
    L, mu = spectral_constants(problem)
    return problem, ProblemConstants(L, mu, 1e-6)


@pytest.fixture(scope="session")
def sweep_ridge():
    """N=2000, d=20, lambda=1e-2: the instance used by the speedup sweep."""
    problem = RidgeProblem(gen_synthetic(2000, 20, 0.1, seed=0), 1e-2)
    L, mu = spectral_constants(problem)
    return problem, ProblemConstants(L, mu, 1e-6)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])

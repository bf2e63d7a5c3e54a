"""Independent reference computations used by the tests.

Nothing here calls into the planner or netsim internals; formulas are
restated from the cost model so a bug in the package cannot hide itself.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

from datasplit.model import DerivedRates, ProblemConstants, TimingModel
from datasplit.planner import PlannerInput


def harmonic(taus) -> float:
    return 1.0 / sum(1.0 / t for t in taus)


def F_reference(b1: float, N: int, taus, tau_comm: float, alpha: float, beta: float, gamma: float) -> float:
    tau1 = taus[0]
    workers = (N - b1) * harmonic(taus[1:]) if len(taus) > 1 else 0.0
    return (max(tau1 * b1, workers) + tau_comm) * alpha * b1 ** (-gamma / 2) + tau1 * b1 * beta


def grid_minimum(N, taus, tau_comm, alpha, beta, gamma) -> tuple[int, float]:
    """Plain loop over every integer b1 in [1, N]."""
    best = min(range(1, N + 1), key=lambda b: F_reference(b, N, taus, tau_comm, alpha, beta, gamma))
    return best, F_reference(best, N, taus, tau_comm, alpha, beta, gamma)


def min_max_finish(N_rest: int, taus) -> float:
    """Smallest achievable max_i tau_i b_i over all integer splits (enumeration)."""
    best = math.inf
    n = len(taus)
    for cut in itertools.combinations(range(N_rest + n - 1), n - 1):
        parts = np.diff([-1, *cut, N_rest + n - 1]) - 1
        best = min(best, max(t * b for t, b in zip(taus, parts)))
    return best


def random_instance(rng: np.random.Generator, gamma: float, *, n=None, N=None, l=None) -> PlannerInput:
    """Instances drawn like the acceptance protocol: tau_1 = 1, workers U[3, 7]."""
    n = int(rng.integers(2, 9)) if n is None else n
    N = int(rng.integers(50, 2001)) if N is None else N
    l = float(rng.uniform(-6, 12)) if l is None else l
    taus = [1.0, *rng.uniform(3, 7, n - 1)]
    L = float(10 ** rng.uniform(0, 4))
    consts = ProblemConstants(L, 1.0, 1e-6, gamma, float(rng.uniform(0.5, 3)), float(rng.uniform(0.5, 3)))
    return PlannerInput(N, TimingModel(taus, 10.0**l), consts)


def unit_rates_input(N, taus, tau_comm, gamma, alpha=1.0, beta=1.0) -> PlannerInput:
    consts = ProblemConstants(1.0, 1.0, 0.5, gamma)
    return PlannerInput(N, TimingModel(taus, tau_comm, allow_zero=True), consts, DerivedRates(alpha, beta))

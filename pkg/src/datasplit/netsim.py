"""Simulated-clock execution, timing noise, and variance analysis of the optimal runtime.

The solver's iterates do not depend on how long anything takes, so a run is
solved once and its trace is replayed against as many timing draws as needed.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .data import RidgeProblem, hessian_gap, shard
from .model import Allocation, DerivedRates, DomainError, ProblemConstants, TimingModel, delta_of, total_time_real
from .planner import large_comm_optimum
from .solver import (
    AlgParams,
    IterRecord,
    SolveResult,
    accel_extragradient,
    default_params,
    make_inner,
    ridge_composite,
)

NOISE_LEVELS = (0.1, 0.2, 0.3, 0.5, 1.0)
_TINY = np.nextafter(0.0, 1.0)


@dataclass(frozen=True)
class NoiseModel:
    """Uniform multiplicative jitter on ``[v (1 - p), v (1 + p)]``.

    ``per_event`` redraws for every communication round and every device
    computation; otherwise one draw holds for the whole run.
    """

    rel_amplitude: float
    applies_to: str = "both"
    seed: int = 0
    per_event: bool = True

    def __post_init__(self) -> None:
        if not 0 <= self.rel_amplitude <= 1:
            raise DomainError(f"noise amplitude must lie in [0, 1], got {self.rel_amplitude}")
        if self.applies_to not in ("comm", "local", "both"):
            raise DomainError(f"applies_to must be comm, local or both, got {self.applies_to!r}")

    @property
    def noisy_comm(self) -> bool:
        return self.applies_to in ("comm", "both")

    @property
    def noisy_local(self) -> bool:
        return self.applies_to in ("local", "both")


def _rng(seed: int, draw_index: int) -> np.random.Generator:
    return np.random.default_rng([seed, draw_index])


def _jitter(rng: np.random.Generator, p: float, size) -> np.ndarray:
    """Multipliers uniform on ``[1 - p, 1 + p]``, kept strictly positive."""
    u = rng.random(size)
    return np.maximum(1.0 + p * (2.0 * u - 1.0), _TINY)


def sample_timing(nominal: TimingModel, noise: NoiseModel, draw_index: int) -> TimingModel:
    """One whole-run draw; the random stream depends only on ``(seed, draw_index)``."""
    rng = _rng(noise.seed, draw_index)
    m = _jitter(rng, noise.rel_amplitude, nominal.n + 1)
    comm = nominal.tau_comm * (m[0] if noise.noisy_comm else 1.0)
    local = np.asarray(nominal.tau_local) * (m[1:] if noise.noisy_local else 1.0)
    return TimingModel(local, comm, allow_zero=True)


@dataclass(frozen=True)
class SimResult:
    sim_time: float
    outer_iters: int
    inner_iters: int
    final_grad_norm: float
    allocation: Allocation
    converged: bool = True


def replay_clock(
    trace: Sequence[IterRecord],
    alloc: Allocation,
    timing: TimingModel,
    noise: NoiseModel | None = None,
    draw_index: int = 0,
) -> float:
    """Simulated wall-clock of a finished run.

    Per outer iteration: two synchronized compute phases (the slowest device
    sets the pace) and two communication rounds; then the server's inner
    iterations at ``tau_1 b_1`` each.
    """
    if alloc.n != timing.n:
        raise DomainError(f"allocation has {alloc.n} devices, timing model has {timing.n}")
    K = len(trace)
    inner = np.array([r.inner_iters for r in trace], dtype=float)
    b = np.asarray(alloc.b, dtype=float)
    tau = np.asarray(timing.tau_local)
    if noise is None or noise.rel_amplitude == 0:
        return total_time_real(alloc.b, timing, 2 * K, float(inner.sum()))
    if not noise.per_event:
        return total_time_real(alloc.b, sample_timing(timing, noise, draw_index), 2 * K, float(inner.sum()))
    rng = _rng(noise.seed, draw_index)
    p = noise.rel_amplitude
    comm = np.full((K, 2), timing.tau_comm)
    compute = np.broadcast_to(tau * b, (K, 2, timing.n)).copy()
    if noise.noisy_comm:
        comm = comm * _jitter(rng, p, (K, 2))
    if noise.noisy_local:
        compute = compute * _jitter(rng, p, (K, 2, timing.n))
    busiest = compute.max(axis=2)
    total_inner = int(inner.sum())
    if noise.noisy_local:
        server = tau[0] * b[0] * _jitter(rng, p, total_inner)
    else:
        server = np.full(total_inner, tau[0] * b[0])
    return float(busiest.sum() + comm.sum() + server.sum())


def solve_allocation(
    problem: RidgeProblem,
    alloc: Allocation,
    consts: ProblemConstants,
    params: AlgParams | None = None,
    *,
    inner: str = "ogmg",
    inner_iters: int = 10,
    exact_units: int = 1,
    similarity: str = "empirical",
    tol: float | None = None,
    relative: bool = True,
    shard_seed: int = 0,
    max_outer: int = 10_000,
) -> SolveResult:
    """Shard ``problem`` by ``alloc`` and run the solver with the server holding shard 1.

    Without explicit ``params`` the step sizes come from the similarity
    ``delta``: the measured Hessian gap between the full objective and the
    server's (``similarity="empirical"``) or ``L / b1**gamma``
    (``similarity="model"``), clamped to ``[mu, L]``.
    """
    shards = shard(problem.data, alloc, shard_seed)
    server = RidgeProblem(shards.shards[0], problem.lam)
    if params is None:
        if similarity == "empirical":
            delta = min(max(hessian_gap(problem, server), consts.mu), consts.L)
        elif similarity == "model":
            delta = delta_of(alloc.b1, consts)[0]
        else:
            raise ValueError(f"unknown similarity mode {similarity!r}")
        params = default_params(consts, delta, max_outer=max_outer)
    obj = ridge_composite(problem, server)
    solver = make_inner(inner, obj.f1, params.theta, inner_iters=inner_iters, exact_units=exact_units)
    return accel_extragradient(
        obj,
        params,
        np.zeros(problem.dim),
        solver,
        tol=consts.eps if tol is None else tol,
        relative=relative,
    )


def simulate_run(
    problem: RidgeProblem,
    alloc: Allocation,
    timing: TimingModel,
    consts: ProblemConstants,
    params: AlgParams | None = None,
    noise: NoiseModel | None = None,
    *,
    draw_index: int = 0,
    solved: SolveResult | None = None,
    **solve_opts,
) -> SimResult:
    """Run the solver on the sharded problem and return the simulated time.

    Pass ``solved`` to reuse an earlier run with the same allocation.
    """
    if alloc.n != timing.n:
        raise DomainError(f"allocation has {alloc.n} devices, timing model has {timing.n}")
    if solved is None:
        solved = solve_allocation(problem, alloc, consts, params, **solve_opts)
    t = replay_clock(solved.trace, alloc, timing, noise, draw_index)
    return SimResult(t, solved.outer_iters, solved.inner_iters, solved.final_grad_norm, alloc, solved.converged)


def speedup(baseline: SimResult | float, candidate: SimResult | float) -> float:
    """``baseline time / candidate time``."""
    b = baseline.sim_time if isinstance(baseline, SimResult) else float(baseline)
    c = candidate.sim_time if isinstance(candidate, SimResult) else float(candidate)
    if c == 0:
        raise ZeroDivisionError("candidate simulated time is zero")
    return b / c


# --- moments and variance formulas -------------------------------------------------


@dataclass(frozen=True)
class MomentEstimate:
    mean: float
    variance: float
    n_samples: int
    ci_halfwidth: float

    def __post_init__(self) -> None:
        if self.variance < 0 or self.ci_halfwidth < 0:
            raise ValueError("variance and CI half-width must be nonnegative")


def moments_of(samples: np.ndarray, z: float = 1.959963984540054) -> MomentEstimate:
    x = np.asarray(samples, dtype=float)
    n = x.size
    if n < 2:
        raise ValueError("need at least two samples")
    mean = float(np.sum(x) / n)
    var = float(np.sum((x - mean) ** 2) / (n - 1))
    return MomentEstimate(mean, var, n, z * math.sqrt(var / n))


def monte_carlo(
    run: Callable[[np.random.Generator], float],
    n_draws: int,
    seed: int = 0,
    *,
    threads: int = 1,
) -> MomentEstimate:
    """Sample ``run`` with one generator per draw, seeded by ``(seed, draw_index)``."""
    if n_draws < 2:
        raise ValueError("n_draws must be >= 2")

    def one(i: int) -> float:
        return float(run(_rng(seed, i)))

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            values = list(pool.map(one, range(n_draws)))
    else:
        values = [one(i) for i in range(n_draws)]
    return moments_of(np.asarray(values))


def bootstrap_variance_ci(
    samples: np.ndarray, *, n_resamples: int = 1000, confidence: float = 0.95, seed: int = 0
) -> tuple[float, float]:
    """Percentile bootstrap interval for the sample variance."""
    x = np.asarray(samples, dtype=float)
    rng = np.random.default_rng(seed)
    n = x.size
    stats = np.empty(n_resamples)
    for i in range(n_resamples):
        stats[i] = np.var(x[rng.integers(0, n, n)], ddof=1)
    a = (1 - confidence) / 2
    lo, hi = np.quantile(stats, [a, 1 - a])
    return float(lo), float(hi)


def uniform_power_moments(nominal: float, p: float, power: float, n_points: int = 1024) -> MomentEstimate:
    """Mean and variance of ``T**power`` for ``T ~ U[nominal (1-p), nominal (1+p)]``.

    Gauss-Legendre quadrature on the uniform density; exact ``n_samples=0``.
    """
    if p == 0:
        return MomentEstimate(nominal**power, 0.0, 0, 0.0)
    nodes, weights = np.polynomial.legendre.leggauss(n_points)
    lo, hi = nominal * (1 - p), nominal * (1 + p)
    t = lo + (hi - lo) * (nodes + 1) / 2
    w = weights / 2  # density 1/(hi-lo) times Jacobian (hi-lo)/2
    m1 = float(np.sum(w * t**power))
    m2 = float(np.sum(w * t ** (2 * power)))
    return MomentEstimate(m1, max(m2 - m1 * m1, 0.0), 0, 0.0)


def var_product(DX: float, EX: float, DY: float, EY: float) -> float:
    """Variance of ``XY`` for independent ``X, Y``: ``DX DY + DX EY^2 + DY EX^2``."""
    if DX < 0 or DY < 0:
        raise ValueError("variances must be nonnegative")
    return DX * DY + DX * EY**2 + DY * EX**2


def large_comm_coefficient(rates: DerivedRates, gamma: float = 0.5) -> float:
    """Deterministic factor of the interior optimum ``c tau_comm^a tau_1^(1-a)``.

    For gamma = 1/2: ``alpha^(4/5) beta^(1/5) (4^(1/5) + 4^(-4/5))``.
    """
    g = gamma / 2
    a = 1 / (1 + g)
    return rates.alpha**a * rates.beta ** (1 - a) * g ** (-g / (1 + g)) * (1 + g)


def large_comm_exponents(gamma: float = 0.5) -> tuple[float, float]:
    """Powers of ``tau_comm`` and ``tau_1`` in the interior optimum (4/5 and 1/5 for gamma = 1/2)."""
    a = 1 / (1 + gamma / 2)
    return a, 1 - a


def theoretical_var_large_comm(
    rates: DerivedRates, m_comm: MomentEstimate, m_loc: MomentEstimate, gamma: float = 0.5
) -> float:
    """Variance of the optimal runtime when communication dominates.

    ``m_comm`` and ``m_loc`` are moments of ``tau_comm^(4/5)`` and ``tau_1^(1/5)``
    (assumed independent).  The deterministic factor enters squared.
    """
    coeff = large_comm_coefficient(rates, gamma)
    return coeff**2 * var_product(m_comm.variance, m_comm.mean, m_loc.variance, m_loc.mean)


def theoretical_var_small_comm(rates: DerivedRates, timing: TimingModel, var_comm: float, N: int, gamma: float = 0.5) -> float:
    """Variance of ``F(b1^0)`` when only ``tau_comm`` is random.

    ``[alpha (tau_1 + s)^(g) / (N s)^(g)]^2 D[tau_comm]`` with ``g = gamma/2``.
    """
    if var_comm < 0:
        raise ValueError("variance must be nonnegative")
    if timing.n < 2:
        raise DomainError("needs at least one worker")
    g = gamma / 2
    s = timing.harmonic_worker_rate()
    coeff = rates.alpha * (timing.tau_server + s) ** g / (N * s) ** g
    return coeff**2 * var_comm


def large_comm_boundary_variance(rates: DerivedRates, var_comm: float, var_loc: float, N: int, gamma: float = 0.5) -> float:
    """Variance of ``alpha tau_comm N^-g + beta tau_1 N`` (optimum pinned at ``b1 = N``)."""
    g = gamma / 2
    return (rates.alpha * N**-g) ** 2 * var_comm + (rates.beta * N) ** 2 * var_loc


def large_comm_optimal_value(rates: DerivedRates, tau_comm: float, tau_1: float, N: int, gamma: float = 0.5) -> float:
    return large_comm_optimum(rates.alpha * tau_comm, rates.beta * tau_1, N, gamma)[1]

"""Experiment drivers behind the CLI: calibration, planning report, ratio sweep, noise study.

Every row is a plain ``dict`` so the CLI can format it; rows come back in grid
order no matter how many threads computed them.
"""

from __future__ import annotations

import math
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .config import RunConfig
from .data import Dataset, RidgeProblem, spectral_constants
from .model import (
    Allocation,
    IterationEstimates,
    ProblemConstants,
    TimingModel,
    calibrate,
    delta_of,
    uniform_allocation,
)
from .netsim import (
    MomentEstimate,
    NoiseModel,
    bootstrap_variance_ci,
    large_comm_boundary_variance,
    moments_of,
    replay_clock,
    sample_timing,
    solve_allocation,
    theoretical_var_large_comm,
    uniform_power_moments,
)
from .planner import (
    PlannerInput,
    allocation_cost,
    closed_form_large_comm,
    closed_form_small_comm,
    equalize_workers,
    large_comm_optimum,
    plan,
)
from .roots import RootError
from .solver import SolveResult

# exceptions recorded per grid point instead of aborting a sweep
NUMERIC_ERRORS = (ArithmeticError, ValueError, RootError)
SMALL_COMM_RATIO = 1e-3

SWEEP_COLUMNS = (
    "l", "tau_comm", "b1_planned", "method", "b1_newton", "b1_cardano", "b1_small_comm", "b1_large_comm",
    "K_planned", "K_uniform", "inner_planned", "inner_uniform", "T_planned", "T_uniform", "speedup",
    "predicted_speedup", "error",
)
NOISE_COLUMNS = (
    "p", "l", "tau_comm", "draws", "ratio_mean", "ratio_ci_low", "ratio_ci_high", "ratio_deviation",
    "regime", "var_theory", "var_empirical", "var_ci_low", "var_ci_high", "within_ci", "error",
)


def ordered_map(fn: Callable, items: Sequence, threads: int = 1) -> list:
    """``map`` that may run concurrently but always returns results in input order."""
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(min(threads, len(items))) as pool:
        return list(pool.map(fn, items))


@dataclass
class Calibration:
    c1: float
    c2: float
    probe: Allocation
    observed: IterationEstimates
    delta: float


class Experiment:
    """Dataset, constants and a cache of solver runs keyed by allocation.

    Solver iterates do not depend on timings, so one run per distinct
    allocation serves every ``tau_comm`` and every noise draw.
    """

    def __init__(self, cfg: RunConfig, data: Dataset | None = None):
        self.cfg = cfg
        self.data = data if data is not None else cfg.data.load(cfg.seed)
        if len(self.data) < cfg.n_devices:
            raise ValueError(f"{len(self.data)} samples cannot cover {cfg.n_devices} devices")
        self.problem = RidgeProblem(self.data, cfg.problem.lam)
        self.L, self.mu = spectral_constants(self.problem, mu_from_spectrum=cfg.problem.mu_from_spectrum)
        self.base = ProblemConstants(self.L, self.mu, cfg.problem.eps, cfg.problem.gamma)
        self.tau_local = cfg.tau_local()
        self._cache: dict[tuple[int, ...], SolveResult] = {}
        self._lock = threading.Lock()
        self._calibration: Calibration | None = None

    @property
    def N(self) -> int:
        return len(self.data)

    def timing(self, tau_comm: float) -> TimingModel:
        return TimingModel(self.tau_local, tau_comm)

    def uniform(self) -> Allocation:
        return uniform_allocation(self.N, self.cfg.n_devices)

    def solve(self, alloc: Allocation) -> SolveResult:
        with self._lock:
            hit = self._cache.get(alloc.b)
        if hit is not None:
            return hit
        s = self.cfg.solver
        result = solve_allocation(
            self.problem,
            alloc,
            self.base,
            inner=s.inner,
            inner_iters=s.inner_iters,
            similarity=s.similarity,
            max_outer=s.max_outer,
            shard_seed=self.cfg.seed,
        )
        with self._lock:
            return self._cache.setdefault(alloc.b, result)

    def probe_allocation(self, b1: int | None = None) -> Allocation:
        b1 = b1 if b1 is not None else self.cfg.solver.probe_b1
        if b1 is None:
            return self.uniform()
        if not 1 <= b1 <= self.N:
            raise ValueError(f"probe b1={b1} outside [1, {self.N}]")
        return Allocation([b1, *equalize_workers(self.N - b1, self.tau_local[1:])])

    def calibrate(self, probe_b1: int | None = None) -> Calibration:
        """Fit ``c1, c2`` so the rate formulas reproduce a probe run's counts."""
        probe = self.probe_allocation(probe_b1)
        run = self.solve(probe)
        observed = IterationEstimates(run.outer_iters, max(run.inner_iters, 1), 2 * run.outer_iters)
        delta = delta_of(probe.b1, self.base)[0]
        c1, c2 = calibrate(observed, self.base, delta)
        return Calibration(c1, c2, probe, observed, delta)

    def consts(self) -> ProblemConstants:
        p = self.cfg.problem
        if not p.needs_calibration:
            return self.base.with_calibration(p.c1, p.c2)
        if self._calibration is None:
            self._calibration = self.calibrate()
        cal = self._calibration
        return self.base.with_calibration(
            cal.c1 if p.c1 == "calibrate" else p.c1,
            cal.c2 if p.c2 == "calibrate" else p.c2,
        )

    def planner_input(self, tau_comm: float) -> PlannerInput:
        return PlannerInput(self.N, self.timing(tau_comm), self.consts())


# --- plan ----------------------------------------------------------------------------


def plan_report(exp: Experiment, tau_comm: float) -> tuple[str, list[dict]]:
    inp = exp.planner_input(tau_comm)
    result = plan(inp)
    uni = exp.uniform()
    t_plan = allocation_cost(result.allocation, inp)
    t_uni = allocation_cost(uni, inp)
    lines = [
        f"devices            {inp.timing.n}",
        f"samples            {inp.N}",
        f"tau_comm           {_fmt(tau_comm)}",
        f"method             {result.method}",
        f"b1                 {result.b1}",
        f"b1 (continuous)    {_fmt(result.b1_continuous)}",
        f"workers            {' '.join(str(b) for b in result.allocation.b[1:]) or '-'}",
        f"predicted T plan   {_fmt(t_plan)}",
        f"predicted T unif   {_fmt(t_uni)}",
        f"predicted speedup  {_fmt(t_uni / t_plan)}",
    ]
    rows = [
        {"device": i + 1, "tau_local": tau, "b_planned": b, "b_uniform": u}
        for i, (tau, b, u) in enumerate(zip(inp.timing.tau_local, result.allocation.b, uni.b))
    ]
    return "\n".join(lines) + "\n", rows


# --- sweep ---------------------------------------------------------------------------


def sweep_point(exp: Experiment, l: int) -> dict:
    tau_comm = exp.cfg.timing.comm_for(l)
    row: dict = {c: "" for c in SWEEP_COLUMNS}
    row.update(l=l, tau_comm=tau_comm)
    try:
        inp = exp.planner_input(tau_comm)
        result = plan(inp)
        row.update(b1_planned=result.b1, method=result.method)
        if inp.timing.n > 1:
            row["b1_newton"] = plan(inp, "newton").b1_continuous
            if inp.consts.gamma == 1.0:
                row["b1_cardano"] = plan(inp, "cardano").b1_continuous
            if tau_comm <= SMALL_COMM_RATIO * min(inp.timing.tau_local):
                row["b1_small_comm"] = closed_form_small_comm(inp).b1_continuous
            if tau_comm >= inp.N * max(inp.timing.tau_local):
                row["b1_large_comm"] = closed_form_large_comm(inp, require_uniform=False).b1_continuous
        uni = exp.uniform()
        run_p, run_u = exp.solve(result.allocation), exp.solve(uni)
        t_p = replay_clock(run_p.trace, result.allocation, inp.timing)
        t_u = replay_clock(run_u.trace, uni, inp.timing)
        row.update(
            K_planned=run_p.outer_iters,
            K_uniform=run_u.outer_iters,
            inner_planned=run_p.inner_iters,
            inner_uniform=run_u.inner_iters,
            T_planned=t_p,
            T_uniform=t_u,
            speedup=t_u / t_p if t_p > 0 else math.nan,
            predicted_speedup=allocation_cost(uni, inp) / allocation_cost(result.allocation, inp),
        )
        if not (run_p.converged and run_u.converged):
            row["error"] = "solver hit max_outer"
    except NUMERIC_ERRORS as exc:
        row["error"] = f"{type(exc).__name__}: {exc}"
    return row


def run_sweep(exp: Experiment, threads: int = 1) -> list[dict]:
    exp.consts()  # calibrate once up front so threads share the result
    return ordered_map(lambda l: sweep_point(exp, l), exp.cfg.timing.l_values, threads)


# --- noise ---------------------------------------------------------------------------


def _regime(exp: Experiment, tau_comm: float) -> str:
    rates = exp.consts().rates()
    return large_comm_optimum(rates.alpha * tau_comm, rates.beta * exp.tau_local[0], exp.N, exp.base.gamma)[2]


def noise_cell(exp: Experiment, p: float, l: int) -> dict:
    """Acceleration ratio statistics and the variance check at one ``(p, l)``.

    Draw ``i`` uses the same random stream at every ``p`` and ``l`` and for both
    allocations (common random numbers).
    """
    cfg = exp.cfg.noise
    tau_comm = exp.cfg.timing.comm_for(l)
    row: dict = {c: "" for c in NOISE_COLUMNS}
    row.update(p=p, l=l, tau_comm=tau_comm, draws=cfg.draws)
    try:
        inp = exp.planner_input(tau_comm)
        planned = plan(inp).allocation
        uni = exp.uniform()
        run_p, run_u = exp.solve(planned), exp.solve(uni)
        nominal = inp.timing
        base_speedup = replay_clock(run_u.trace, uni, nominal) / replay_clock(run_p.trace, planned, nominal)
        noise = NoiseModel(p, cfg.applies_to, exp.cfg.seed, cfg.per_event)
        ratios = np.empty(cfg.draws)
        fmin = np.empty(cfg.draws)
        rates = inp.rates
        gamma = exp.base.gamma
        for i in range(cfg.draws):
            t_u = replay_clock(run_u.trace, uni, nominal, noise, i)
            t_p = replay_clock(run_p.trace, planned, nominal, noise, i)
            ratios[i] = (t_u / t_p) / base_speedup
            drawn = sample_timing(nominal, noise, i)
            fmin[i] = large_comm_optimum(rates.alpha * drawn.tau_comm, rates.beta * drawn.tau_server, exp.N, gamma)[1]
        if p == 0:
            m = MomentEstimate(float(ratios.mean()), 0.0, cfg.draws, 0.0)
        else:
            m = moments_of(ratios)
        regime = _regime(exp, tau_comm)
        var_theory = _fmin_variance(rates, nominal, p, exp.N, gamma, regime, noise)
        if p == 0:
            lo = hi = 0.0
            var_emp = 0.0
        else:
            var_emp = float(np.var(fmin, ddof=1))
            lo, hi = bootstrap_variance_ci(fmin, n_resamples=cfg.bootstrap, seed=exp.cfg.seed)
        row.update(
            ratio_mean=m.mean,
            ratio_ci_low=m.mean - m.ci_halfwidth,
            ratio_ci_high=m.mean + m.ci_halfwidth,
            ratio_deviation=abs(m.mean - 1.0),
            regime=regime,
            var_theory=var_theory,
            var_empirical=var_emp,
            var_ci_low=lo,
            var_ci_high=hi,
            within_ci=bool(lo <= var_theory <= hi) if p > 0 else True,
        )
    except NUMERIC_ERRORS as exc:
        row["error"] = f"{type(exc).__name__}: {exc}"
    return row


def _fmin_variance(rates, nominal: TimingModel, p: float, N: int, gamma: float, regime: str, noise: NoiseModel) -> float:
    """Variance of the communication-dominated optimum under uniform noise."""
    tc, t1 = nominal.tau_comm, nominal.tau_server
    p_comm = p if noise.noisy_comm else 0.0
    p_loc = p if noise.noisy_local else 0.0
    if regime == "interior":
        a = 1 / (1 + gamma / 2)
        return theoretical_var_large_comm(
            rates, uniform_power_moments(tc, p_comm, a), uniform_power_moments(t1, p_loc, 1 - a), gamma
        )
    return large_comm_boundary_variance(rates, (tc * p_comm) ** 2 / 3, (t1 * p_loc) ** 2 / 3, N, gamma)


def run_noise(exp: Experiment, threads: int = 1) -> list[dict]:
    exp.consts()
    cells = [(p, l) for p in exp.cfg.noise.levels for l in exp.cfg.noise_l_values()]
    return ordered_map(lambda c: noise_cell(exp, *c), cells, threads)


def _fmt(v: float) -> str:
    return format(v, ".12g")


def rows_as_strings(rows: Iterable[dict], columns: Sequence[str]) -> list[list[str]]:
    """Cell formatting shared by every CSV: 12 significant digits for floats."""
    out = []
    for row in rows:
        cells = []
        for c in columns:
            v = row.get(c, "")
            if isinstance(v, bool):
                cells.append("true" if v else "false")
            elif isinstance(v, float):
                cells.append(_fmt(v))
            else:
                cells.append(str(v))
        out.append(cells)
    return out

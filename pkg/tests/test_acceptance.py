"""Acceptance criteria 1-11.

Each test records one ``PASS``/``FAIL`` line, printed in the terminal summary
(and echoed immediately, visible with ``-s``), then asserts.
"""

from __future__ import annotations

import math
import os
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from conftest import ACCEPTANCE
from datasplit.cli import csv_text
from datasplit.config import NoiseSpec, RunConfig
from datasplit.data import ParseError, parse_libsvm, read_libsvm, serialize_libsvm
from datasplit.experiments import SWEEP_COLUMNS, Experiment, run_noise, run_sweep
from datasplit.model import Allocation, DerivedRates, TimingModel, uniform_allocation
from datasplit.netsim import (
    NOISE_LEVELS,
    NoiseModel,
    bootstrap_variance_ci,
    sample_timing,
    solve_allocation,
    theoretical_var_small_comm,
    var_product,
)
from datasplit.planner import (
    branch_root,
    breakpoint_b10,
    brute_force_plan,
    closed_form_large_comm,
    objective_F,
    plan,
)
from oracles import random_instance, unit_rates_input

DATA = Path(__file__).parent / "data"
MAX_THREADS = os.cpu_count() or 1


def report(n: int, ok: bool, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}"
    ACCEPTANCE[n] = line
    print(line)
    assert ok, line


@pytest.fixture(scope="module")
def protocol_sweep():
    start = time.perf_counter()
    rows = run_sweep(Experiment(RunConfig()), threads=1)
    return rows, time.perf_counter() - start


@pytest.fixture(scope="module")
def protocol_noise():
    cfg = replace(RunConfig(), noise=NoiseSpec(draws=10_000))
    return run_noise(Experiment(cfg), threads=MAX_THREADS)


def test_criterion_01_planner_vs_brute_force():
    rng = np.random.default_rng(101)
    start, worst = time.perf_counter(), 0.0
    for i in range(100):
        inp = random_instance(rng, (0.5, 1.0)[i % 2])
        worst = max(worst, objective_F(plan(inp).b1, inp) / brute_force_plan(inp).objective_value)
    took = time.perf_counter() - start
    report(1, worst <= 1.01 and took < 60, f"max F(plan)/F(brute) = {worst:.6f} over 100 instances ({took:.1f}s)")


def test_criterion_02_cardano_newton():
    rng = np.random.default_rng(202)
    worst, compared = 0.0, 0
    while compared < 100:
        inp = random_instance(rng, 1.0)
        for branch in ("a", "b"):
            c, n = branch_root(inp, branch, "cardano"), branch_root(inp, branch, "newton")
            if c is not None and n is not None:
                worst = max(worst, abs(c - n) / abs(n))
                compared += 1
    report(2, worst <= 1e-8, f"max relative root gap {worst:.2e} over {compared} interior roots")


def test_criterion_03_large_comm_closed_form():
    rng = np.random.default_rng(303)
    worst_b = worst_F = 0.0
    for i in range(20):
        gamma = (0.5, 1.0)[i % 2]
        g = gamma / 2
        N, n = int(rng.integers(200, 2001)), int(rng.integers(2, 9))
        tau = float(rng.uniform(0.5, 5))
        # beta above g alpha N^(1-g) keeps the optimum strictly inside (1, N)
        beta = float(rng.uniform(5, 20)) * g * N ** (1 - g)
        inp = unit_rates_input(N, [tau] * n, N**2 * tau, gamma, alpha=1.0, beta=beta)
        closed, newton = closed_form_large_comm(inp), plan(inp, "newton")
        assert closed.notes["regime"] == "interior"
        worst_b = max(worst_b, abs(closed.b1_continuous - newton.b1_continuous) / newton.b1_continuous)
        worst_F = max(worst_F, abs(objective_F(closed.b1_continuous, inp) - newton.objective_value) / newton.objective_value)
    report(3, worst_b <= 0.02 and worst_F <= 0.01, f"max b1 gap {worst_b:.2%}, max F gap {worst_F:.4%} over 20 instances")


def test_criterion_04_small_comm_bound():
    rng = np.random.default_rng(404)
    worst, over_ceil = -math.inf, 0
    for i in range(200):
        inp = random_instance(rng, (0.5, 1.0)[i % 2], l=float(rng.uniform(-6, -3)))
        res, b10 = plan(inp), breakpoint_b10(inp.N, inp.timing)
        worst = max(worst, res.b1_continuous / b10)
        over_ceil += res.b1 > math.ceil(b10)
    ok = worst <= 1 + 1e-12 and over_ceil == 0
    report(4, ok, f"max continuous b1/b10 = {worst:.6f}, integer b1 above ceil(b10): {over_ceil} of 200")


def test_criterion_05_speedup_sweep(protocol_sweep):
    rows, took = protocol_sweep
    errors = [r["l"] for r in rows if r["error"]]
    worse = [r["l"] for r in rows if not r["error"] and r["T_planned"] > r["T_uniform"] * (1 + 1e-6)]
    ok = len(rows) == 19 and not errors and not worse and took < 300
    low = min(r["speedup"] for r in rows if not r["error"])
    report(5, ok, f"{len(rows)} rows, min speedup {low:.4f}, errors at {errors}, planned slower at {worse} ({took:.1f}s)")


def test_criterion_06_solver_correctness(sweep_ridge):
    problem, consts = sweep_ridge
    alloc = uniform_allocation(2000, 21)
    w = problem.solve()
    exact = solve_allocation(problem, alloc, consts, inner="exact", tol=1e-6, relative=False)
    ogmg = solve_allocation(problem, alloc, consts, inner="ogmg", tol=1e-6, relative=False)
    err_exact = float(np.linalg.norm(exact.x_f - w))
    err_ogmg = float(np.linalg.norm(ogmg.x_f - exact.x_f))
    ok = exact.converged and exact.final_grad_norm <= 1e-6 and err_exact <= 1e-5 and err_ogmg <= 1e-4
    report(6, ok, f"grad {exact.final_grad_norm:.1e}, |x-w*| {err_exact:.1e}, |x_ogmg-x_exact| {err_ogmg:.1e}")


def test_criterion_07_iteration_scaling(sweep_ridge):
    problem, consts = sweep_ridge
    counts = []
    for b1 in (4, 16, 64, 256):
        rest = 2000 - b1
        alloc = Allocation([b1, *([rest // 20 + 1] * (rest % 20)), *([rest // 20] * (20 - rest % 20))])
        counts.append(solve_allocation(problem, alloc, consts, inner="exact").outer_iters)
    ok = all(b <= a for a, b in zip(counts, counts[1:]))
    report(7, ok, f"outer iterations at b1 = 4, 16, 64, 256: {counts}")


def _small_comm_variance_checks(draws: int) -> list[tuple[float, float, float, float]]:
    timing = TimingModel([1.0, 3.0, 5.0, 7.0], 1e-3)
    N, gamma, rates = 1000, 0.5, DerivedRates(1.0, 1.0)
    inp = unit_rates_input(N, list(timing.tau_local), timing.tau_comm, gamma)
    b10 = breakpoint_b10(N, timing)
    out = []
    for p in NOISE_LEVELS:
        noise = NoiseModel(p, "comm", seed=7, per_event=False)
        f = np.array([
            objective_F(b10, replace(inp, timing=sample_timing(timing, noise, i))) for i in range(draws)
        ])
        lo, hi = bootstrap_variance_ci(f, n_resamples=1000, seed=1)
        th = theoretical_var_small_comm(rates, timing, (timing.tau_comm * p) ** 2 / 3, N, gamma)
        out.append((p, th, lo, hi))
    return out


def test_criterion_08_variance_formulas(protocol_noise):
    rng = np.random.default_rng(808)
    x, y = rng.uniform(1, 3, 10**6), rng.uniform(-2, 5, 10**6)
    gap = abs(np.var(x * y, ddof=1) / var_product(4 / 12, 2.0, 49 / 12, 1.5) - 1)
    large = [r for r in protocol_noise if r["p"] > 0]
    large_misses = [(r["p"], r["l"]) for r in large if r["error"] or not r["within_ci"]]
    small = _small_comm_variance_checks(10_000)
    small_misses = [p for p, th, lo, hi in small if not lo <= th <= hi]
    ok = gap <= 0.02 and not large_misses and not small_misses and {r["p"] for r in large} == set(NOISE_LEVELS)
    report(
        8, ok,
        f"var_product MC gap {gap:.2%}; large-comm cells outside CI {large_misses} of {len(large)}; "
        f"small-comm levels outside CI {small_misses} of {len(small)}",
    )


def test_criterion_09_noise_insensitivity(protocol_noise):
    top = sorted({r["l"] for r in protocol_noise})[-3:]
    bad = []
    for p in NOISE_LEVELS:
        devs = [next(r["ratio_deviation"] for r in protocol_noise if r["p"] == p and r["l"] == l) for l in top]
        if not all(b < a for a, b in zip(devs, devs[1:])):
            bad.append((p, devs))
    report(9, not bad, f"|ratio - 1| decreasing over l = {top} for every p; violations {bad}")


def test_criterion_10_parser():
    round_trip = serialize_libsvm(read_libsvm(DATA / "golden.svm")) == (DATA / "golden.expected.svm").read_text()
    again = serialize_libsvm(parse_libsvm(serialize_libsvm(read_libsvm(DATA / "golden.svm"))))
    round_trip = round_trip and again == (DATA / "golden.expected.svm").read_text()
    cases = [
        ("1 a:b", 1), ("1 1:1\nabc 1:2", 2), ("1 1:1\n\n2 3", 3), ("1 0:1", 1), ("1 -2:1", 1),
        ("1 2:1 2:3", 1), ("1 3:1 2:3", 1), ("# c\n1 1:x", 2), ("1 1:nan", 1), ("inf 1:1", 1),
    ]
    wrong = []
    for text, line in cases:
        try:
            parse_libsvm(text)
            wrong.append(text)
        except ParseError as exc:
            if exc.lineno != line or f"line {line}" not in str(exc):
                wrong.append(text)
    report(10, round_trip and not wrong, f"golden round trip {round_trip}, {len(cases) - len(wrong)}/{len(cases)} malformed inputs rejected at the right line")


def test_criterion_11_determinism(protocol_sweep):
    rows, _ = protocol_sweep
    single = csv_text(rows, SWEEP_COLUMNS)
    repeat = csv_text(run_sweep(Experiment(RunConfig()), threads=1), SWEEP_COLUMNS)
    threads = sorted({4, MAX_THREADS})
    multi = [csv_text(run_sweep(Experiment(RunConfig()), threads=t), SWEEP_COLUMNS) for t in threads]
    ok = all(single == repeat == m for m in multi)
    report(11, ok, f"sweep CSV byte-identical at 1 and {threads} threads: {ok}")

from __future__ import annotations

import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from datasplit.model import Allocation, DomainError, uniform_allocation
from datasplit.planner import (
    allocation_cost,
    branch_F,
    branch_root,
    breakpoint_b10,
    brute_force_plan,
    closed_form_large_comm,
    closed_form_small_comm,
    dF,
    equalize_workers,
    large_comm_optimum,
    objective_F,
    plan,
)
from datasplit.model import TimingModel
from oracles import F_reference, grid_minimum, min_max_finish, random_instance, unit_rates_input


class TestEqualize:
    def test_symmetric(self):
        assert equalize_workers(10, [1, 1]) == [5, 5]

    def test_two_speeds(self):
        assert equalize_workers(8, [1, 3]) == [6, 2]

    def test_three_speeds(self):
        b = equalize_workers(7, [2, 3, 6])
        assert b == [4, 2, 1]
        assert max(t * x for t, x in zip([2, 3, 6], b)) == 8

    def test_zero_and_empty(self):
        assert equalize_workers(0, [1.0, 2.0]) == [0, 0]
        assert equalize_workers(5, []) == []

    @given(st.integers(0, 12), st.lists(st.floats(0.5, 8), min_size=1, max_size=4))
    @settings(max_examples=150, deadline=None)
    def test_minimal_max_finish_time(self, N_rest, taus):
        b = equalize_workers(N_rest, taus)
        assert sum(b) == N_rest and min(b) >= 0
        ours = max(t * x for t, x in zip(taus, b))
        assert ours == pytest.approx(min_max_finish(N_rest, taus))

    @given(st.integers(1, 3000), st.lists(st.floats(0.5, 8), min_size=2, max_size=8))
    @settings(max_examples=150, deadline=None)
    def test_no_single_transfer_helps(self, N_rest, taus):
        b = equalize_workers(N_rest, taus)
        worst = max(t * x for t, x in zip(taus, b))
        for i, j in itertools.permutations(range(len(b)), 2):
            if b[i] == 0:
                continue
            moved = list(b)
            moved[i] -= 1
            moved[j] += 1
            assert max(t * x for t, x in zip(taus, moved)) >= worst - 1e-12
        for i, j in itertools.combinations(range(len(b)), 2):
            if b[i] >= 1 and b[j] >= 1:
                assert abs(taus[i] * b[i] - taus[j] * b[j]) <= max(taus[i], taus[j]) + 1e-9


class TestBreakpoint:
    def test_symmetric(self):
        assert breakpoint_b10(100, TimingModel([1, 1], 1)) == pytest.approx(50)

    def test_two_workers(self):
        assert breakpoint_b10(100, TimingModel([1, 1, 1], 1)) == pytest.approx(100 / 3)

    def test_slow_server(self):
        assert breakpoint_b10(90, TimingModel([2, 1], 1)) == pytest.approx(30)


class TestObjective:
    def test_gamma_one(self):
        assert objective_F(1, unit_rates_input(2, [1, 1], 0.0, 1.0)) == pytest.approx(2.0)

    def test_gamma_half(self):
        assert objective_F(1, unit_rates_input(2, [1, 1], 0.0, 0.5)) == pytest.approx(2.0)

    def test_domain(self):
        inp = unit_rates_input(10, [1, 1], 1.0, 1.0)
        with pytest.raises(DomainError):
            objective_F(0, inp)
        with pytest.raises(DomainError):
            objective_F(11, inp)

    def test_matches_reference(self, rng):
        for _ in range(50):
            inp = random_instance(rng, float(rng.choice([0.5, 1.0])))
            r = inp.rates
            b = float(rng.uniform(1, inp.N))
            ref = F_reference(b, inp.N, inp.timing.tau_local, inp.timing.tau_comm, r.alpha, r.beta, inp.consts.gamma)
            assert objective_F(b, inp) == pytest.approx(ref, rel=1e-12)

    def test_branch_continuity(self, rng):
        for _ in range(100):
            inp = random_instance(rng, float(rng.choice([0.5, 1.0])))
            b10 = breakpoint_b10(inp.N, inp.timing)
            if b10 < 1:
                continue
            fa, fb = branch_F(b10, inp, "a"), branch_F(b10, inp, "b")
            assert fa == pytest.approx(fb, rel=1e-9)
            assert objective_F(b10, inp) == pytest.approx(fa, rel=1e-9)

    def test_derivative_finite_difference(self, rng):
        checked = 0
        while checked < 100:
            inp = random_instance(rng, float(rng.choice([0.5, 1.0])), l=float(rng.uniform(-2, 4)))
            b = float(rng.uniform(2, inp.N - 1))
            h = 1e-4 * b
            b10 = breakpoint_b10(inp.N, inp.timing)
            if abs(b - b10) <= 2 * h:
                continue
            fd = (objective_F(b + h, inp) - objective_F(b - h, inp)) / (2 * h)
            scale = abs(inp.rates.alpha) + abs(inp.rates.beta) * inp.timing.tau_server
            assert abs(dF(b, inp) - fd) <= 1e-6 * max(1.0, scale, abs(fd))
            checked += 1

    def test_right_branch_ends_increasing_gamma_one(self, rng):
        for _ in range(50):
            inp = random_instance(rng, 1.0, l=float(rng.uniform(-6, 2)))
            assert dF(float(inp.N), inp) > 0

    def test_right_branch_increasing_without_comm(self):
        inp = unit_rates_input(1000, [1, 3, 5], 0.0, 0.5, alpha=2.0, beta=0.5)
        b10 = breakpoint_b10(1000, inp.timing)
        for b in np.linspace(b10 + 1, 1000, 50):
            expected = 0.75 * 2.0 * b**-0.25 + 0.5
            assert dF(b, inp) == pytest.approx(expected, rel=1e-12)
            assert dF(b, inp) > 0


class TestClosedForms:
    def test_large_comm_unit_argument(self):
        inp = unit_rates_input(100, [1, 1, 1], 4.0, 0.5)
        assert closed_form_large_comm(inp).b1_continuous == pytest.approx(1.0)

    def test_large_comm_value(self):
        inp = unit_rates_input(100, [1, 1, 1], 64.0, 0.5)
        assert closed_form_large_comm(inp).b1_continuous == pytest.approx(16 ** 0.8, rel=1e-12)
        assert 16 ** 0.8 == pytest.approx(9.1896, abs=1e-4)

    def test_large_comm_constant(self):
        b, value, regime = large_comm_optimum(1.0, 1.0, 1e9, 0.5)
        assert regime == "interior"
        assert value == pytest.approx(4 ** 0.2 + 4 ** -0.8, rel=1e-12)
        assert value == pytest.approx(1.6494, abs=1e-4)

    def test_large_comm_boundary(self):
        b, value, regime = large_comm_optimum(1e12, 1.0, 100, 0.5)
        assert regime == "boundary" and b == 100
        assert value == pytest.approx(1e12 * 100**-0.25 + 100)

    def test_large_comm_needs_common_tau(self):
        with pytest.raises(DomainError):
            closed_form_large_comm(unit_rates_input(100, [1, 2, 3], 1e6, 0.5))
        assert closed_form_large_comm(unit_rates_input(100, [1, 2, 3], 1e6, 0.5), require_uniform=False).b1 >= 1

    def test_large_comm_matches_newton(self):
        N = 500
        inp = unit_rates_input(N, [1.0] * 5, N**2 * 1.0, 0.5, alpha=1.0, beta=40.0)
        closed, newton = closed_form_large_comm(inp), plan(inp, "newton")
        assert closed.notes["regime"] == "interior"
        assert closed.b1_continuous == pytest.approx(newton.b1_continuous, rel=0.02)

    def test_small_comm_below_breakpoint(self, rng):
        for _ in range(100):
            inp = random_instance(rng, float(rng.choice([0.5, 1.0])), l=float(rng.uniform(-6, 0)))
            res = closed_form_small_comm(inp)
            b10 = breakpoint_b10(inp.N, inp.timing)
            assert res.b1_continuous <= b10 + 1e-9
            assert res.b1 <= max(1, math.floor(b10))

    def test_small_comm_zero_comm_agrees_with_plan(self, rng):
        for _ in range(50):
            n = int(rng.integers(2, 9))
            inp = unit_rates_input(int(rng.integers(50, 2000)), [1.0, *rng.uniform(3, 7, n - 1)], 0.0,
                                   float(rng.choice([0.5, 1.0])), float(rng.uniform(1, 50)), float(rng.uniform(0.1, 3)))
            small, full = closed_form_small_comm(inp), plan(inp)
            assert objective_F(small.b1_continuous, inp) <= 1.01 * full.objective_value

    def test_small_comm_huge_beta(self):
        inp = unit_rates_input(1000, [1, 3, 5, 7], 1e-6, 0.5, alpha=1.0, beta=1e6)
        res = closed_form_small_comm(inp)
        assert res.b1 == 1 and res.b1_continuous == pytest.approx(1.0)


class TestPlan:
    def test_single_device(self):
        inp = unit_rates_input(37, [1.0], 5.0, 0.5)
        res = plan(inp)
        assert res.b1 == 37 and res.allocation.b == (37,)
        assert brute_force_plan(inp).b1 == 37

    def test_small_instance_vs_grid(self):
        inp = unit_rates_input(50, [1, 3, 5], 2.0, 1.0)
        _, best = grid_minimum(50, [1, 3, 5], 2.0, 1.0, 1.0, 1.0)
        assert objective_F(plan(inp).b1, inp) <= 1.01 * best

    def test_large_comm_plan_matches_closed_form(self):
        N = 400
        inp = unit_rates_input(N, [1.0] * 4, float(N**2), 0.5, alpha=1.0, beta=30.0)
        closed = closed_form_large_comm(inp)
        assert plan(inp).b1 == pytest.approx(closed.b1_continuous, rel=0.02)

    @pytest.mark.parametrize("gamma", [0.5, 1.0])
    def test_matches_independent_grid(self, rng, gamma):
        for _ in range(30):
            inp = random_instance(rng, gamma, N=int(rng.integers(50, 400)))
            r, t = inp.rates, inp.timing
            b_ref, F_ref = grid_minimum(inp.N, t.tau_local, t.tau_comm, r.alpha, r.beta, gamma)
            res = plan(inp)
            assert objective_F(res.b1, inp) <= F_ref * (1 + 1e-12)

    @pytest.mark.parametrize("gamma", [0.5, 1.0])
    def test_brute_force_agrees(self, rng, gamma):
        for _ in range(100):
            inp = random_instance(rng, gamma)
            bf = brute_force_plan(inp)
            assert objective_F(plan(inp).b1, inp) <= 1.01 * bf.objective_value
            assert bf.objective_value <= allocation_cost(uniform_allocation(inp.N, inp.timing.n), inp) * (1 + 1e-12)

    def test_brute_force_limit(self):
        inp = unit_rates_input(20_000, [1.0, 2.0], 1.0, 0.5)
        with pytest.raises(DomainError):
            brute_force_plan(inp)

    def test_cardano_newton_roots_agree(self, rng):
        compared = 0
        for _ in range(200):
            inp = random_instance(rng, 1.0)
            for branch in ("a", "b"):
                c, n = branch_root(inp, branch, "cardano"), branch_root(inp, branch, "newton")
                if c is not None and n is not None:
                    assert c == pytest.approx(n, rel=1e-8)
                    compared += 1
        assert compared > 50

    def test_cardano_rejected_for_gamma_half(self, rng):
        with pytest.raises(DomainError):
            branch_root(random_instance(rng, 0.5), "a", "cardano")

    def test_plan_never_worse_than_uniform(self, rng):
        for _ in range(200):
            inp = random_instance(rng, float(rng.choice([0.5, 1.0])))
            res = plan(inp)
            uni = uniform_allocation(inp.N, inp.timing.n)
            assert allocation_cost(res.allocation, inp) <= allocation_cost(uni, inp)
            assert res.allocation.N == inp.N

    def test_small_comm_plan_below_breakpoint(self, rng):
        for _ in range(100):
            inp = random_instance(rng, float(rng.choice([0.5, 1.0])), l=float(rng.uniform(-6, -3)))
            res, b10 = plan(inp), breakpoint_b10(inp.N, inp.timing)
            assert res.b1_continuous <= b10 * (1 + 1e-12)
            # rounding a minimizer that sits on the kink may step just past it
            assert res.b1 <= math.ceil(b10)

    def test_allocation_cost_mismatch(self):
        inp = unit_rates_input(10, [1.0, 1.0], 1.0, 0.5)
        with pytest.raises(DomainError):
            allocation_cost(Allocation([5, 4]), inp)

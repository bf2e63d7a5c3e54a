"""Choose the server shard size b1 minimizing the runtime functional F(b1).

Workers always receive Lemma-1 shares (per-sample time times shard size equal
across workers), so the search is one-dimensional in ``b1``.  With
``g = gamma / 2`` and ``s = (sum_{i>=2} 1/tau_i)^-1``::

    F(b1) = (max(tau_1 b1, (N - b1) s) + tau_comm) * alpha * b1**-g + tau_1 b1 beta

The max switches branch at ``b1^0 = N s / (tau_1 + s)``.  Each branch has at
most one stationary point, so the global minimizer is among the branch roots
and the points ``{1, b1^0, N}``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .model import Allocation, DerivedRates, DomainError, ProblemConstants, TimingModel, uniform_allocation
from .roots import newton_root, solve_cardano

METHODS = ("newton", "cardano", "small_comm", "large_comm", "boundary", "uniform", "brute_force")
BRUTE_FORCE_LIMIT = 10_000


@dataclass(frozen=True)
class PlannerInput:
    N: int
    timing: TimingModel
    consts: ProblemConstants
    rates: DerivedRates | None = None

    def __post_init__(self) -> None:
        if self.N < self.timing.n:
            raise DomainError(f"N={self.N} smaller than the number of devices {self.timing.n}")
        if self.rates is None:
            object.__setattr__(self, "rates", self.consts.rates())

    @property
    def g(self) -> float:
        return self.consts.gamma / 2.0

    @property
    def s(self) -> float:
        return self.timing.harmonic_worker_rate()


@dataclass(frozen=True)
class PlanResult:
    allocation: Allocation
    b1_continuous: float
    objective_value: float
    method: str
    notes: dict = field(default_factory=dict, compare=False)

    @property
    def b1(self) -> int:
        return self.allocation.b1


def equalize_workers(N_rest: int, tau_workers: Sequence[float]) -> list[int]:
    """Integer worker shares with ``tau_i b_i`` as equal as possible.

    Starts from the floors of the continuous shares ``b_i ~ 1/tau_i`` and hands
    each leftover sample to the worker whose finish time grows least
    (ties to the lower index).  The result minimizes ``max_i tau_i b_i`` over
    integer allocations.
    """
    if not tau_workers:
        return []
    if N_rest < 0:
        raise DomainError(f"negative sample count {N_rest}")
    inv = [1.0 / t for t in tau_workers]
    total = math.fsum(inv)
    shares = [N_rest * w / total for w in inv]
    b = [min(int(math.floor(x + 1e-9)), N_rest) for x in shares]
    while sum(b) > N_rest:  # guard against the 1e-9 nudge overshooting
        i = max(range(len(b)), key=lambda j: (tau_workers[j] * b[j], j))
        b[i] -= 1
    for _ in range(N_rest - sum(b)):
        i = min(range(len(b)), key=lambda j: (tau_workers[j] * (b[j] + 1), j))
        b[i] += 1
    return b


def breakpoint_b10(N: float, timing: TimingModel) -> float:
    """Server shard where ``tau_1 b1 == (N - b1) s``."""
    if timing.n < 2:
        raise DomainError("breakpoint needs at least one worker")
    s = timing.harmonic_worker_rate()
    return N * s / (timing.tau_server + s)


def _b10(inp: PlannerInput) -> float:
    return breakpoint_b10(inp.N, inp.timing) if inp.timing.n > 1 else 0.0


def _check_b1(b1: float, inp: PlannerInput) -> None:
    if not (0 < b1 <= inp.N) or not math.isfinite(b1):
        raise DomainError(f"b1={b1} outside (0, {inp.N}]")


def objective_F(b1: float, inp: PlannerInput) -> float:
    _check_b1(b1, inp)
    tau1, tc = inp.timing.tau_server, inp.timing.tau_comm
    workers = (inp.N - b1) * inp.s if inp.timing.n > 1 else 0.0
    alpha, beta = inp.rates.alpha, inp.rates.beta
    return (max(tau1 * b1, workers) + tc) * alpha * b1 ** (-inp.g) + tau1 * b1 * beta


def branch_F(b1: float, inp: PlannerInput, branch: str) -> float:
    """Evaluate one branch formula regardless of where ``b1`` lies."""
    tau1, tc = inp.timing.tau_server, inp.timing.tau_comm
    alpha, beta, g = inp.rates.alpha, inp.rates.beta, inp.g
    if branch == "a":
        s = inp.s
        return (inp.N * s + tc) * alpha * b1**-g - alpha * s * b1 ** (1 - g) + tau1 * beta * b1
    if branch == "b":
        return tc * alpha * b1**-g + alpha * tau1 * b1 ** (1 - g) + tau1 * beta * b1
    raise ValueError(f"unknown branch {branch!r}")


def _branch_of(b1: float, inp: PlannerInput) -> str:
    return "a" if inp.timing.n > 1 and b1 <= _b10(inp) else "b"


def branch_dF(b1: float, inp: PlannerInput, branch: str) -> float:
    tau1, tc = inp.timing.tau_server, inp.timing.tau_comm
    alpha, beta, g = inp.rates.alpha, inp.rates.beta, inp.g
    if branch == "a":
        s = inp.s
        return alpha * (-g * (inp.N * s + tc) * b1 ** (-g - 1) - (1 - g) * s * b1**-g) + tau1 * beta
    return alpha * (-g * tc * b1 ** (-g - 1) + (1 - g) * tau1 * b1**-g) + tau1 * beta


def branch_d2F(b1: float, inp: PlannerInput, branch: str) -> float:
    tau1, tc = inp.timing.tau_server, inp.timing.tau_comm
    alpha, g = inp.rates.alpha, inp.g
    if branch == "a":
        s = inp.s
        return alpha * (g * (g + 1) * (inp.N * s + tc) * b1 ** (-g - 2) + g * (1 - g) * s * b1 ** (-g - 1))
    return alpha * (g * (g + 1) * tc * b1 ** (-g - 2) - g * (1 - g) * tau1 * b1 ** (-g - 1))


def dF(b1: float, inp: PlannerInput) -> float:
    """Derivative of :func:`objective_F`; at ``b1^0`` the left branch is used."""
    _check_b1(b1, inp)
    return branch_dF(b1, inp, _branch_of(b1, inp))


def cardano_coefficients(inp: PlannerInput, branch: str) -> tuple[float, float, float]:
    """``(b, a, c)`` of ``a x^-1/2 + b x^-3/2 + c`` for the gamma = 1 derivative.

    Signs come from differentiating the branch formula, so on branch (a) the
    ``x^-1/2`` coefficient is negative.
    """
    if inp.consts.gamma != 1.0:
        raise DomainError("the cubic reduction holds for gamma = 1 only")
    tau1, tc = inp.timing.tau_server, inp.timing.tau_comm
    alpha, beta = inp.rates.alpha, inp.rates.beta
    c = tau1 * beta
    if branch == "a":
        s = inp.s
        return -0.5 * alpha * (inp.N * s + tc), -0.5 * alpha * s, c
    return -0.5 * alpha * tc, 0.5 * alpha * tau1, c


def _interval(inp: PlannerInput, branch: str) -> tuple[float, float] | None:
    b10 = _b10(inp)
    if branch == "a":
        lo, hi = 1.0, min(b10, float(inp.N))
    else:
        lo, hi = max(b10, 1.0), float(inp.N)
    return (lo, hi) if lo < hi else None


def branch_root(inp: PlannerInput, branch: str, method: str) -> float | None:
    """Stationary point of one branch inside its half-interval (clipped to b1 >= 1)."""
    span = _interval(inp, branch)
    if span is None:
        return None
    lo, hi = span
    if method == "cardano":
        root = solve_cardano(*cardano_coefficients(inp, branch))
        if root is None or not (lo <= root <= hi):
            return None
        return root
    if method != "newton":
        raise ValueError(f"unknown root method {method!r}")
    f = lambda x: branch_dF(x, inp, branch)  # noqa: E731
    fp = lambda x: branch_d2F(x, inp, branch)  # noqa: E731
    tol = 1e-10 * (abs(f(lo)) + abs(f(hi)))
    root = newton_root(f, lo, hi, tol, fprime=fp)
    # a sign change forced by an endpoint is not an interior stationary point
    if root is None or root in (lo, hi):
        return None
    return root


def _round_b1(candidates: Sequence[float], inp: PlannerInput, F=None) -> int:
    F = F or (lambda b: objective_F(b, inp))
    best: tuple[float, int] | None = None
    for c in candidates:
        for b in {math.floor(c), math.ceil(c)}:
            b = min(max(int(b), 1), inp.N)
            key = (F(b), b)
            if best is None or key < best:
                best = key
    return best[1]


def _allocation(b1: int, inp: PlannerInput) -> Allocation:
    return Allocation([b1, *equalize_workers(inp.N - b1, inp.timing.tau_workers)])


def _default_root_method(inp: PlannerInput) -> str:
    return "cardano" if inp.consts.gamma == 1.0 else "newton"


def plan(inp: PlannerInput, root_method: str | None = None) -> PlanResult:
    """Optimal allocation: compare branch stationary points against ``1, b1^0, N``.

    ``root_method`` is ``"cardano"`` (gamma = 1 only) or ``"newton"``; by default
    Cardano is used for gamma = 1 and Newton otherwise.
    """
    if inp.timing.n == 1:
        value = objective_F(inp.N, inp)
        return PlanResult(Allocation([inp.N]), float(inp.N), value, "boundary")
    method = root_method or _default_root_method(inp)
    roots = {br: branch_root(inp, br, method) for br in ("a", "b")}
    b10 = _b10(inp)
    candidates: list[tuple[float, str]] = [(r, method) for r in roots.values() if r is not None]
    candidates += [(x, "boundary") for x in (1.0, b10, float(inp.N)) if 1.0 <= x <= inp.N]
    b_cont, tag = min(candidates, key=lambda c: (objective_F(c[0], inp), c[0]))
    b1 = _round_b1([c for c, _ in candidates], inp)
    alloc = _allocation(b1, inp)
    notes = {"b10": b10, "root_a": roots["a"], "root_b": roots["b"]}
    # integer worker shares can leave the uniform split marginally cheaper
    uniform = uniform_allocation(inp.N, inp.timing.n)
    if allocation_cost(uniform, inp) < allocation_cost(alloc, inp):
        alloc, tag = uniform, "uniform"
    return PlanResult(alloc, b_cont, objective_F(b_cont, inp), tag, notes)


def allocation_cost(alloc: Allocation, inp: PlannerInput) -> float:
    """``F`` for an arbitrary integer allocation: the max runs over the real shards."""
    if alloc.N != inp.N or alloc.n != inp.timing.n:
        raise DomainError("allocation does not match the planner input")
    t = inp.timing
    busiest = max(tau * b for tau, b in zip(t.tau_local, alloc.b))
    return (busiest + t.tau_comm) * inp.rates.alpha * alloc.b1**-inp.g + t.tau_server * alloc.b1 * inp.rates.beta


def _common_tau(inp: PlannerInput, rtol: float = 1e-9) -> float:
    taus = inp.timing.tau_local
    ref = taus[0]
    if any(abs(t - ref) > rtol * ref for t in taus):
        raise DomainError("large-communication closed form needs one common per-sample time")
    return ref


def large_comm_optimum(alpha_tc: float, beta_tau: float, N: float, gamma: float = 0.5) -> tuple[float, float, str]:
    """Minimize ``alpha_tc b^-g + beta_tau b`` over ``(0, N]``; returns ``(b, value, regime)``.

    For gamma = 1/2 the interior point is ``(alpha_tc / (4 beta_tau))^(4/5)`` with
    value ``alpha_tc^(4/5) beta_tau^(1/5) (4^(1/5) + 4^(-4/5))``.
    """
    g = gamma / 2.0
    b = (g * alpha_tc / beta_tau) ** (1.0 / (1.0 + g))
    if 0 < b < N:
        return b, (1.0 + g) * alpha_tc * b**-g, "interior"
    return float(N), alpha_tc * N**-g + beta_tau * N, "boundary"


def closed_form_large_comm(inp: PlannerInput, *, require_uniform: bool = True) -> PlanResult:
    """Communication-dominated regime, where the max term is dropped from F.

    With ``require_uniform=False`` the server's per-sample time plays the role of
    the common ``tau``; the workers' times do not enter the reduced objective.
    """
    tau = _common_tau(inp) if require_uniform else inp.timing.tau_server
    alpha, beta = inp.rates.alpha, inp.rates.beta
    tc = inp.timing.tau_comm
    b_cont, value, regime = large_comm_optimum(alpha * tc, beta * tau, inp.N, inp.consts.gamma)
    reduced = lambda b: alpha * tc * b**-inp.g + beta * tau * b  # noqa: E731
    b1 = _round_b1([max(b_cont, 1.0)], inp, reduced)
    notes = {
        "regime": regime,
        # the reduction assumes tau_comm >> N tau
        "comm_over_N_tau": tc / (inp.N * max(inp.timing.tau_local)),
    }
    return PlanResult(_allocation(b1, inp), b_cont, value, "large_comm", notes)


def small_comm_F(b1: float, inp: PlannerInput) -> float:
    """Branch (a) with ``tau_comm`` dropped: ``alpha s b1^-g (N - b1) + tau_1 beta b1``."""
    s, g = inp.s, inp.g
    return inp.rates.alpha * s * b1**-g * (inp.N - b1) + inp.timing.tau_server * inp.rates.beta * b1


def closed_form_small_comm(inp: PlannerInput) -> PlanResult:
    """Cheap-communication regime: search ``[1, b1^0]`` on the reduced branch (a)."""
    s, g, N = inp.s, inp.g, inp.N
    alpha, beta, tau1 = inp.rates.alpha, inp.rates.beta, inp.timing.tau_server
    b10 = _b10(inp)
    ratio = inp.timing.tau_comm / min(inp.timing.tau_local)

    def d1(b: float) -> float:
        return alpha * s * (-g * N * b ** (-g - 1) - (1 - g) * b**-g) + tau1 * beta

    def d2(b: float) -> float:
        return alpha * s * (g * (g + 1) * N * b ** (-g - 2) + g * (1 - g) * b ** (-g - 1))

    hi = max(b10, 1.0)
    if hi <= 1.0:
        b_cont = 1.0
    else:
        root = newton_root(d1, 1.0, hi, 1e-10 * (abs(d1(1.0)) + abs(d1(hi))), fprime=d2)
        if root is not None:
            b_cont = root
        else:
            b_cont = hi if d1(hi) < 0 else 1.0
    b1 = _round_b1([b_cont], inp, lambda b: small_comm_F(b, inp))
    b1 = min(b1, max(1, math.floor(b10)))
    notes = {"b10": b10, "comm_over_min_tau": ratio}
    return PlanResult(_allocation(b1, inp), b_cont, objective_F(b_cont, inp), "small_comm", notes)


def brute_force_plan(inp: PlannerInput) -> PlanResult:
    """Exhaustive search over integer ``b1`` in ``[1, N]``; test oracle."""
    N = inp.N
    if N > BRUTE_FORCE_LIMIT:
        raise DomainError(f"brute force limited to N <= {BRUTE_FORCE_LIMIT}, got {N}")
    if inp.timing.n == 1:
        return PlanResult(Allocation([N]), float(N), objective_F(N, inp), "brute_force")
    b = np.arange(1, N + 1, dtype=float)
    t = inp.timing
    s = 1.0 / np.sum(1.0 / np.asarray(t.tau_workers))
    busiest = np.maximum(t.tau_server * b, (N - b) * s)
    F = (busiest + t.tau_comm) * inp.rates.alpha * b ** (-inp.consts.gamma / 2) + t.tau_server * b * inp.rates.beta
    i = int(np.argmin(F))
    b1 = i + 1
    return PlanResult(_allocation(b1, inp), float(b1), float(F[i]), "brute_force")

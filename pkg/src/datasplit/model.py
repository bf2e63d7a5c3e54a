"""Cost model: timings, problem constants, iteration-count estimates and T_sum.

Natural logarithms are used throughout; a different base would only rescale
the calibration constants ``c1``/``c2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence


class DomainError(ValueError):
    """Argument outside the region where a cost-model formula is defined."""


@dataclass(frozen=True)
class TimingModel:
    """Per-sample compute cost of each device and per-round communication cost.

    ``tau_local[0]`` belongs to the server (device 1).
    """

    tau_local: tuple[float, ...]
    tau_comm: float

    def __init__(self, tau_local: Sequence[float], tau_comm: float, *, allow_zero: bool = False):
        taus = tuple(float(t) for t in tau_local)
        if not taus:
            raise DomainError("timing model needs at least one device")
        bad = [t for t in (*taus, float(tau_comm)) if not math.isfinite(t) or t < 0 or (t == 0 and not allow_zero)]
        if bad:
            raise DomainError(f"timings must be finite and positive, got {bad[0]!r}")
        object.__setattr__(self, "tau_local", taus)
        object.__setattr__(self, "tau_comm", float(tau_comm))

    @property
    def n(self) -> int:
        return len(self.tau_local)

    @property
    def tau_server(self) -> float:
        return self.tau_local[0]

    @property
    def tau_workers(self) -> tuple[float, ...]:
        return self.tau_local[1:]

    def harmonic_worker_rate(self) -> float:
        """``s = (sum_{i>=2} 1/tau_i)^-1``: time per sample of the equalized worker pool."""
        if self.n < 2:
            raise DomainError("no workers in a single-device network")
        return 1.0 / math.fsum(1.0 / t for t in self.tau_workers)


@dataclass(frozen=True)
class ProblemConstants:
    L: float
    mu: float
    eps: float
    gamma: float = 0.5
    c1: float = 1.0
    c2: float = 1.0

    def __post_init__(self) -> None:
        if not (0 < self.mu <= self.L) or not math.isfinite(self.L):
            raise DomainError(f"need 0 < mu <= L, got mu={self.mu}, L={self.L}")
        if not (0 < self.eps < 1):
            raise DomainError(f"eps must lie in (0, 1), got {self.eps}")
        if self.gamma not in (0.5, 1.0):
            raise DomainError(f"gamma must be 1/2 or 1, got {self.gamma}")
        if self.c1 <= 0 or self.c2 <= 0:
            raise DomainError("calibration constants must be positive")

    @property
    def log_inv_eps(self) -> float:
        return math.log(1.0 / self.eps)

    @property
    def kappa(self) -> float:
        return self.L / self.mu

    def rates(self) -> DerivedRates:
        base = math.sqrt(self.kappa) * self.log_inv_eps
        return DerivedRates(alpha=self.c1 * base, beta=self.c2 * base)

    def with_calibration(self, c1: float, c2: float) -> ProblemConstants:
        return ProblemConstants(self.L, self.mu, self.eps, self.gamma, c1, c2)


@dataclass(frozen=True)
class DerivedRates:
    """``alpha = c1 sqrt(L/mu) log(1/eps)`` and ``beta = c2 sqrt(L/mu) log(1/eps)``."""

    alpha: float
    beta: float

    def __post_init__(self) -> None:
        if not (self.alpha > 0 and self.beta > 0):
            raise DomainError("alpha and beta must be positive")


@dataclass(frozen=True)
class Allocation:
    b: tuple[int, ...]

    def __init__(self, b: Sequence[int]):
        counts = tuple(int(v) for v in b)
        if not counts:
            raise DomainError("empty allocation")
        if any(v < 0 for v in counts):
            raise DomainError(f"negative shard size in {counts}")
        if counts[0] < 1:
            raise DomainError("the server must hold at least one sample")
        object.__setattr__(self, "b", counts)

    @property
    def N(self) -> int:
        return sum(self.b)

    @property
    def n(self) -> int:
        return len(self.b)

    @property
    def b1(self) -> int:
        return self.b[0]


@dataclass(frozen=True)
class IterationEstimates:
    """Outer count ``K``, total server inner count ``k_some``.

    ``two_k`` is the number of communication rounds (``2K``); the rate formula
    bounds this quantity directly, so an estimate may carry an odd value.
    """

    K_outer: int
    k_inner: int
    two_k: int | None = None

    def __post_init__(self) -> None:
        if self.K_outer < 1 or self.k_inner < 1:
            raise DomainError("iteration counts must be >= 1")
        if self.two_k is None:
            object.__setattr__(self, "two_k", 2 * self.K_outer)
        elif self.two_k < 1:
            raise DomainError("two_k must be >= 1")


def uniform_allocation(N: int, n: int) -> Allocation:
    """``b_i = N // n`` with the remainder handed out from device 1 onward."""
    if n < 1 or N < n:
        raise DomainError(f"cannot split {N} samples over {n} devices")
    q, r = divmod(N, n)
    return Allocation([q + (1 if i < r else 0) for i in range(n)])


def delta_of(b1: float, consts: ProblemConstants) -> tuple[float, bool]:
    """Similarity ``L / b1**gamma`` clamped to ``[mu, L]``.

    Returns ``(delta, clamped)``.
    """
    if b1 < 1:
        raise DomainError(f"server shard must hold >= 1 sample, got {b1}")
    raw = consts.L / b1**consts.gamma
    delta = min(max(raw, consts.mu), consts.L)
    return delta, delta != raw


def _outer_factor(consts: ProblemConstants, delta: float) -> float:
    return max(1.0, math.sqrt(delta / consts.mu))


def _inner_factor(consts: ProblemConstants, delta: float) -> float:
    return max(
        1.0,
        math.sqrt(consts.L / delta),
        math.sqrt(delta / consts.mu),
        math.sqrt(consts.L / consts.mu),
    )


def _check_delta(consts: ProblemConstants, delta: float) -> None:
    # small slack so a clamped delta_of() output is always accepted
    tol = 1e-12 * consts.L
    if not (consts.mu - tol <= delta <= consts.L + tol):
        raise DomainError(f"delta={delta} outside [mu, L] = [{consts.mu}, {consts.L}]")


def real_rate_estimates(consts: ProblemConstants, delta: float) -> tuple[float, float]:
    """Un-ceilinged ``(2K, k_some)``; the planner works with these."""
    _check_delta(consts, delta)
    two_k = consts.c1 * _outer_factor(consts, delta) * consts.log_inv_eps
    k_some = consts.c2 * _inner_factor(consts, delta) * consts.log_inv_eps
    return two_k, k_some


def rate_estimates(consts: ProblemConstants, delta: float) -> IterationEstimates:
    """Integer counts ``2K = ceil(c1 max{1, sqrt(delta/mu)} log 1/eps)`` and
    ``k_some = ceil(c2 max{1, sqrt(L/delta), sqrt(delta/mu), sqrt(L/mu)} log 1/eps)``.
    """
    two_k, k_some = real_rate_estimates(consts, delta)
    two_k_int = max(1, math.ceil(two_k - 1e-9))
    return IterationEstimates(
        K_outer=math.ceil(two_k_int / 2),
        k_inner=max(1, math.ceil(k_some - 1e-9)),
        two_k=two_k_int,
    )


def total_time(alloc: Allocation, timing: TimingModel, est: IterationEstimates) -> float:
    """``2 K max_i(tau_i b_i) + 2 K tau_comm + tau_1 b_1 k_some``."""
    return total_time_real(alloc.b, timing, est.two_k, est.k_inner)


def total_time_real(b: Sequence[float], timing: TimingModel, two_k: float, k_inner: float) -> float:
    """Same accounting with real-valued counts; ``two_k`` is ``2K``."""
    if len(b) != timing.n:
        raise DomainError(f"allocation has {len(b)} devices, timing model has {timing.n}")
    busiest = max(t * bi for t, bi in zip(timing.tau_local, b))
    return two_k * busiest + two_k * timing.tau_comm + timing.tau_server * b[0] * k_inner


def calibrate(
    observed: IterationEstimates,
    consts: ProblemConstants,
    delta: float,
) -> tuple[float, float]:
    """Invert the rate formulas: return ``(c1, c2)`` reproducing ``observed``."""
    _check_delta(consts, delta)
    log_term = consts.log_inv_eps
    if log_term <= 0:
        raise DomainError("log(1/eps) must be positive")
    c1 = observed.two_k / (_outer_factor(consts, delta) * log_term)
    c2 = observed.k_inner / (_inner_factor(consts, delta) * log_term)
    return c1, c2

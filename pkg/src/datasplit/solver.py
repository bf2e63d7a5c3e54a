"""Accelerated Extragradient with pluggable solvers for the server subproblem.

One outer iteration::

    x_g  = tau x + (1 - tau) x_f
    x_f' ~ argmin_x <grad(f - f1)(x_g), x - x_g> + ||x - x_g||^2 / (2 theta) + f1(x)
    x'   = x + eta alpha (x_f' - x) - eta grad f(x_f')

``f1`` is the objective held by the server; ``f - f1`` is only touched through
its gradient.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Protocol

import numpy as np
import scipy.linalg

from .data import RidgeProblem
from .model import DomainError, ProblemConstants

Vector = np.ndarray
GradFn = Callable[[Vector], Vector]


class DivergenceError(ArithmeticError):
    def __init__(self, iteration: int, msg: str = "non-finite iterate"):
        super().__init__(f"{msg} at outer iteration {iteration}")
        self.iteration = iteration


@dataclass(frozen=True)
class AlgParams:
    momentum: float
    eta: float
    theta: float
    alpha_reg: float
    max_outer: int = 10_000

    def __post_init__(self) -> None:
        if not 0 < self.momentum < 1:
            raise DomainError(f"momentum must lie in (0, 1), got {self.momentum}")
        if min(self.eta, self.theta, self.alpha_reg) <= 0:
            raise DomainError("eta, theta and alpha_reg must be positive")
        if self.max_outer < 1:
            raise DomainError("max_outer must be >= 1")

    @property
    def similarity(self) -> float:
        """The ``delta`` this parameterization was built for (``theta = 1 / 2 delta``)."""
        return 1.0 / (2.0 * self.theta)


def default_params(consts: ProblemConstants, delta: float, *, max_outer: int = 10_000, **overrides) -> AlgParams:
    """``theta = 1/(2 delta)``, ``alpha = mu``, ``tau = min(1, sqrt(mu/delta)/2)``,
    ``eta = min(1/(2 mu), 1/(2 sqrt(mu delta)))``.  Keyword overrides win."""
    mu = consts.mu
    if not mu <= delta <= consts.L * (1 + 1e-12):
        raise DomainError(f"delta={delta} outside [mu, L]")
    values = dict(
        momentum=min(1.0, 0.5 * math.sqrt(mu / delta)),
        eta=min(1.0 / (2.0 * mu), 1.0 / (2.0 * math.sqrt(mu * delta))),
        theta=1.0 / (2.0 * delta),
        alpha_reg=mu,
        max_outer=max_outer,
    )
    values.update({k: v for k, v in overrides.items() if v is not None})
    return AlgParams(**values)


@dataclass
class OptState:
    x: Vector
    x_f: Vector
    k: int = 0
    inner_iters_total: int = 0


class ServerObjective(Protocol):
    """What the inner solvers need from ``f1``."""

    smoothness: float

    def grad(self, x: Vector) -> Vector: ...


@dataclass
class QuadraticPart:
    """``f1(x) = x^T H x / 2 - g^T x`` with dense ``H``; covers any ridge shard."""

    H: np.ndarray
    g: np.ndarray
    smoothness: float = field(init=False)

    def __post_init__(self) -> None:
        self.smoothness = float(np.linalg.eigvalsh(self.H)[-1]) * (1 + 1e-12) if self.H.size else 0.0

    @classmethod
    def from_ridge(cls, problem: RidgeProblem) -> QuadraticPart:
        return cls(problem.hessian(), problem.xty())

    def grad(self, x: Vector) -> Vector:
        return self.H @ x - self.g


@dataclass
class CompositeObjective:
    f1: QuadraticPart
    f_rest: GradFn
    full_grad: GradFn


def ridge_composite(full: RidgeProblem, server: RidgeProblem) -> CompositeObjective:
    """Split a ridge problem into the server part and the remainder."""
    F = QuadraticPart.from_ridge(full)
    f1 = QuadraticPart.from_ridge(server)
    H_rest, g_rest = F.H - f1.H, F.g - f1.g
    return CompositeObjective(f1=f1, f_rest=lambda x: H_rest @ x - g_rest, full_grad=F.grad)


def subproblem_exact_ridge(
    x_g: Vector, grad_rest: Vector, theta: float, server: RidgeProblem | QuadraticPart
) -> Vector:
    """Closed-form minimizer of the line-5 model for a quadratic ``f1``.

    Solves ``(I/theta + H1) x = x_g/theta - grad_rest + g1``.
    """
    part = server if isinstance(server, QuadraticPart) else QuadraticPart.from_ridge(server)
    return ExactProx(part, theta)(x_g, grad_rest)[0]


class ExactProx:
    """Line-5 solve through a cached Cholesky factorization of ``I/theta + H1``.

    Each solve is reported as ``work_units`` inner iterations.
    """

    def __init__(self, f1: QuadraticPart, theta: float, work_units: int = 1):
        if theta <= 0 or not math.isfinite(theta):
            raise DomainError("exact prox needs a finite positive theta")
        d = f1.H.shape[0]
        try:
            self._factor = scipy.linalg.cho_factor(np.eye(d) / theta + f1.H)
        except np.linalg.LinAlgError as exc:
            raise DomainError("subproblem matrix is singular") from exc
        self.f1, self.theta, self.work_units = f1, theta, work_units

    def __call__(self, x_g: Vector, grad_rest: Vector) -> tuple[Vector, int]:
        rhs = x_g / self.theta - grad_rest + self.f1.g
        return scipy.linalg.cho_solve(self._factor, rhs), self.work_units


def ogmg_thetas(n: int) -> np.ndarray:
    th = np.ones(n + 1)
    for i in range(n - 1, 0, -1):
        th[i] = (1 + math.sqrt(1 + 4 * th[i + 1] ** 2)) / 2
    if n >= 1:
        th[0] = (1 + math.sqrt(1 + 8 * th[1] ** 2)) / 2
    return th


def subproblem_ogmg(grad: GradFn, smoothness: float, x_start: Vector, inner_iters: int) -> Vector:
    """OGM-G (Kim and Fessler) with a fixed budget of ``inner_iters`` gradient steps.

    The method drives ``||grad(x_N)||`` down at the optimal ``O(1/N)`` rate for
    smooth convex functions.  Of the final pair ``(x_N, y_N)`` the point with the
    smaller gradient is returned, so the guarantee on ``x_N`` is kept.
    """
    if inner_iters < 1:
        raise DomainError("inner_iters must be >= 1")
    th = ogmg_thetas(inner_iters)
    x = np.array(x_start, dtype=float)
    y = x.copy()
    gx = grad(x)
    if not np.any(gx):
        return x
    for i in range(inner_iters):
        y_next = x - gx / smoothness
        x = (
            y_next
            + (th[i] - 1) * (2 * th[i + 1] - 1) / (th[i] * (2 * th[i] - 1)) * (y_next - y)
            + (2 * th[i + 1] - 1) / (2 * th[i] - 1) * (y_next - x)
        )
        y = y_next
        gx = grad(x)
        if not np.all(np.isfinite(gx)):
            raise ArithmeticError(f"OGM-G produced non-finite values at step {i}")
    gy = grad(y)
    return y if np.linalg.norm(gy) < np.linalg.norm(gx) else x


class OGMGProx:
    """Line-5 solve by OGM-G.

    Non-adaptive: one run of ``inner_iters`` steps per call.  Adaptive: restarted
    runs of ``inner_iters`` steps until the inexactness test
    ``||grad A(x)|| <= c delta ||x - x_g||`` holds (``delta = 1/(2 theta)``,
    ``c = 1/(sqrt 3 + 1/2)``), capped at ``max_blocks`` runs.
    """

    TEST_CONST = 1.0 / (math.sqrt(3.0) + 0.5)

    def __init__(self, f1: QuadraticPart, theta: float, inner_iters: int = 20, *, adaptive: bool = True, max_blocks: int = 200):
        self.f1, self.theta = f1, theta
        self.inner_iters, self.adaptive, self.max_blocks = inner_iters, adaptive, max_blocks
        self.smoothness = f1.smoothness + 1.0 / theta

    def __call__(self, x_g: Vector, grad_rest: Vector) -> tuple[Vector, int]:
        def grad_model(x: Vector) -> Vector:
            return grad_rest + (x - x_g) / self.theta + self.f1.grad(x)

        x = x_g
        used = 0
        delta = 1.0 / (2.0 * self.theta)
        for _ in range(self.max_blocks if self.adaptive else 1):
            x = subproblem_ogmg(grad_model, self.smoothness, x, self.inner_iters)
            used += self.inner_iters
            if not self.adaptive:
                break
            gnorm = np.linalg.norm(grad_model(x))
            if gnorm <= self.TEST_CONST * delta * np.linalg.norm(x - x_g) or gnorm == 0.0:
                break
        return x, used


InnerSolver = Callable[[Vector, Vector], "tuple[Vector, int]"]


@dataclass
class IterRecord:
    k: int
    grad_norm: float
    inner_iters: int


@dataclass
class SolveResult:
    x: Vector
    x_f: Vector
    trace: list[IterRecord]
    converged: bool

    @property
    def outer_iters(self) -> int:
        return len(self.trace)

    @property
    def inner_iters(self) -> int:
        return sum(r.inner_iters for r in self.trace)

    @property
    def final_grad_norm(self) -> float:
        return self.trace[-1].grad_norm if self.trace else math.nan


def accel_extragradient(
    obj: CompositeObjective,
    params: AlgParams,
    x0: Vector,
    inner: InnerSolver,
    *,
    tol: float = 1e-6,
    relative: bool = True,
    on_iteration: Callable[[OptState, IterRecord], None] | None = None,
) -> SolveResult:
    """Run until ``||grad f(x_f)|| <= tol`` (times ``||grad f(x0)||`` if ``relative``)
    or ``params.max_outer`` iterations.

    ``inner(x_g, grad_rest)`` returns the approximate line-5 minimizer and the
    number of server iterations it spent.
    """
    x0 = np.asarray(x0, dtype=float)
    if not np.all(np.isfinite(x0)):
        raise DomainError("x0 must be finite")
    state = OptState(x=x0.copy(), x_f=x0.copy())
    g0 = float(np.linalg.norm(obj.full_grad(x0)))
    target = tol * g0 if relative else tol
    trace: list[IterRecord] = []
    if g0 <= target:
        return SolveResult(state.x, state.x_f, trace, True)
    tau, eta, alpha = params.momentum, params.eta, params.alpha_reg
    converged = False
    for k in range(params.max_outer):
        x_g = tau * state.x + (1 - tau) * state.x_f
        x_f, used = inner(x_g, obj.f_rest(x_g))
        g_f = obj.full_grad(x_f)
        x = state.x + eta * alpha * (x_f - state.x) - eta * g_f
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(x_f))):
            raise DivergenceError(k)
        state.x, state.x_f, state.k = x, x_f, k + 1
        state.inner_iters_total += used
        rec = IterRecord(k, float(np.linalg.norm(g_f)), used)
        trace.append(rec)
        if on_iteration is not None:
            on_iteration(state, rec)
        if rec.grad_norm > 1e12 * max(g0, 1.0):
            raise DivergenceError(k, "gradient blew up")
        if rec.grad_norm <= target:
            converged = True
            break
    return SolveResult(state.x, state.x_f, trace, converged)


def make_inner(kind: str, f1: QuadraticPart, theta: float, *, inner_iters: int = 20, adaptive: bool = True, exact_units: int = 1) -> InnerSolver:
    if kind == "exact":
        return ExactProx(f1, theta, exact_units)
    if kind == "ogmg":
        return OGMGProx(f1, theta, inner_iters, adaptive=adaptive)
    raise ValueError(f"unknown inner solver {kind!r}")

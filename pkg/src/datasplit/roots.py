"""Scalar root finders used by the planner."""

from __future__ import annotations

import math
from typing import Callable, Optional


class RootError(ArithmeticError):
    pass


def real_cubic_roots(a3: float, a2: float, a1: float, a0: float) -> list[float]:
    """Real roots of ``a3 y^3 + a2 y^2 + a1 y + a0``, ascending.

    Cardano for one real root, the trigonometric form for three.  Each root is
    polished with two Newton steps on the original polynomial.
    """
    if a3 == 0:
        raise RootError("leading coefficient is zero")
    b, c, d = a2 / a3, a1 / a3, a0 / a3
    # y = t - b/3  ->  t^3 + p t + q = 0
    shift = b / 3.0
    p = c - b * b / 3.0
    q = 2.0 * b**3 / 27.0 - b * c / 3.0 + d
    disc = (q / 2.0) ** 2 + (p / 3.0) ** 3
    scale = max(abs(p), abs(q), 1e-300)
    if disc > 1e-14 * scale**2 or p >= 0:
        sq = math.sqrt(max(disc, 0.0))
        u = _cbrt(-q / 2.0 + sq)
        v = _cbrt(-q / 2.0 - sq)
        ts = [u + v]
    else:
        r = 2.0 * math.sqrt(-p / 3.0)
        # same as 3q / (p r) without forming p r, which underflows for tiny p
        arg = 1.5 * q / p * math.sqrt(-3.0 / p)
        phi = math.acos(min(1.0, max(-1.0, arg)))
        ts = [r * math.cos((phi - 2.0 * math.pi * k) / 3.0) for k in range(3)]

    def poly(y: float) -> tuple[float, float]:
        return ((a3 * y + a2) * y + a1) * y + a0, (3.0 * a3 * y + 2.0 * a2) * y + a1

    roots = []
    for t in ts:
        y = t - shift
        for _ in range(2):
            val, slope = poly(y)
            if slope == 0 or not math.isfinite(slope):
                break
            y_new = y - val / slope
            if not math.isfinite(y_new) or abs(poly(y_new)[0]) >= abs(val):
                break
            y = y_new
        roots.append(y)
    return sorted(roots)


def solve_cardano(coef_m32: float, coef_m12: float, coef_0: float) -> Optional[float]:
    """Positive root of ``a x^-1/2 + b x^-3/2 + c = 0`` (a=coef_m12, b=coef_m32, c=coef_0).

    With ``y = sqrt(x)`` the equation becomes ``c y^3 + a y^2 + b = 0``.  Returns
    ``y**2`` for the unique positive ``y``, or ``None`` when there is no
    positive root.  When several positive roots exist the smallest is returned.
    """
    a, b, c = coef_m12, coef_m32, coef_0
    if a == 0 and b == 0 and c == 0:
        raise RootError("all coefficients are zero")
    if c == 0:
        # a y^2 + b = 0
        if a == 0 or -b / a <= 0:
            return None
        return -b / a
    positive = [y for y in real_cubic_roots(c, a, 0.0, b) if y > 0]
    if not positive:
        return None
    return positive[0] ** 2


def newton_root(
    f: Callable[[float], float],
    lo: float,
    hi: float,
    tol: float = 1e-12,
    *,
    fprime: Callable[[float], float] | None = None,
    max_iter: int = 200,
) -> Optional[float]:
    """Zero of ``f`` on ``[lo, hi]`` by Newton steps safeguarded with bisection.

    Returns ``None`` when ``f`` has the same strict sign at both ends.  Without
    ``fprime`` a central difference is used.  Iteration stops once
    ``|f(x)| <= tol`` or the bracket has collapsed to rounding level; one extra
    Newton step is taken after a residual stop to polish the root.
    """
    if not lo < hi:
        raise RootError(f"empty bracket [{lo}, {hi}]")
    flo, fhi = _finite(f, lo), _finite(f, hi)
    if flo == 0:
        return lo
    if fhi == 0:
        return hi
    if (flo > 0) == (fhi > 0):
        return None

    def slope(x: float) -> float:
        if fprime is not None:
            return fprime(x)
        h = 1e-7 * max(1.0, abs(x))
        h = min(h, (x - lo) / 2 if x > lo else h, (hi - x) / 2 if x < hi else h)
        return (f(x + h) - f(x - h)) / (2 * h)

    a, b = (lo, hi) if flo < 0 else (hi, lo)  # f(a) < 0 < f(b)
    x = lo + (hi - lo) / 2
    polished = False
    for _ in range(max_iter):
        fx = _finite(f, x)
        if fx == 0:
            return x
        if fx < 0:
            a = x
        else:
            b = x
        left, right = min(a, b), max(a, b)
        if abs(fx) <= tol:
            if polished:
                return x
            polished = True
        d = slope(x)
        x_new = x - fx / d if d != 0 and math.isfinite(d) else math.nan
        if not (left < x_new < right):
            x_new = left + (right - left) / 2
        if abs(x_new - x) <= 4 * math.ulp(max(abs(x), abs(x_new))) or right - left <= 4 * math.ulp(right):
            return x_new if abs(_finite(f, x_new)) <= abs(fx) else x
        x = x_new
    fx = _finite(f, x)
    if abs(fx) <= tol:
        return x
    raise RootError(f"no convergence after {max_iter} iterations, |f|={abs(fx):.3e}")


def _cbrt(v: float) -> float:
    return math.copysign(abs(v) ** (1.0 / 3.0), v)


def _finite(f: Callable[[float], float], x: float) -> float:
    v = float(f(x))
    if not math.isfinite(v):
        raise RootError(f"non-finite function value at x={x!r}")
    return v

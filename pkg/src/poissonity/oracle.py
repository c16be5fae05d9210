"""pgf-based diagnostics: ``D(t) = Psi'(t) - mu Psi(t)`` and its L1 bounds.

These are independent of the sampling-based tests.  They work from a
distribution's pgf only, and check numerically that ``|e^{-mu} - p(0)|``
and ``e^mu |T^(k)|`` bracket ``int_0^1 |D(t)| dt`` for sign-constant laws.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable

import numpy as np

from .dist import DistSpec, mean, pgf, pgf_deriv, pmf
from .gof import f_k

__all__ = [
    "BoundsReport",
    "MembershipReport",
    "Sign",
    "adaptive_simpson",
    "antiderivative_check",
    "check_bounds",
    "d_func",
    "l1_distance",
    "membership_check",
]

QUAD_TOL = 1e-8
BOUNDS_TOL = 1e-7
SIGN_TOL = 1e-10


def adaptive_simpson(
    func: Callable[[float], float], a: float, b: float, tol: float = QUAD_TOL, max_depth: int = 48
) -> float:
    """Adaptive Simpson rule with interval bisection and Richardson correction."""

    def simpson(fa: float, fm: float, fb: float, h: float) -> float:
        return h * (fa + 4.0 * fm + fb) / 6.0

    fa, fb, fm = func(a), func(b), func(0.5 * (a + b))
    whole = simpson(fa, fm, fb, b - a)
    total = 0.0
    # explicit stack: (a, b, fa, fm, fb, whole, tol, depth)
    stack = [(a, b, fa, fm, fb, whole, tol, 0)]
    while stack:
        a, b, fa, fm, fb, whole, eps, depth = stack.pop()
        m = 0.5 * (a + b)
        lm, rm = 0.5 * (a + m), 0.5 * (m + b)
        flm, frm = func(lm), func(rm)
        left = simpson(fa, flm, fm, m - a)
        right = simpson(fm, frm, fb, b - m)
        delta = left + right - whole
        if depth >= max_depth or abs(delta) <= 15.0 * eps:
            total += left + right + delta / 15.0
        else:
            stack.append((a, m, fa, flm, fm, left, eps / 2, depth + 1))
            stack.append((m, b, fm, frm, fb, right, eps / 2, depth + 1))
    return total


def d_func(spec: DistSpec, t):
    """``Psi'(t) - mean * Psi(t)``; identically zero for Poisson laws."""
    return pgf_deriv(spec, t) - mean(spec) * pgf(spec, t)


def l1_distance(spec: DistSpec, tol: float = QUAD_TOL) -> float:
    """``int_0^1 |D(t)| dt`` by adaptive Simpson."""
    return adaptive_simpson(lambda t: abs(d_func(spec, t)), 0.0, 1.0, tol)


def antiderivative_check(spec: DistSpec, tol: float = QUAD_TOL) -> tuple[float, float]:
    """``(int_0^1 D(t) e^{-mu t} dt, e^{-mu} - p(0))``; the two should agree."""
    mu = mean(spec)
    integral = adaptive_simpson(lambda t: d_func(spec, t) * math.exp(-mu * t), 0.0, 1.0, tol)
    return integral, math.exp(-mu) - pmf(spec, 0)


@dataclass(frozen=True)
class BoundsReport:
    spec: DistSpec
    k: int
    mu: float
    t_abs_k: float
    l1: float
    lower: float
    upper: float
    holds: bool


def _partial_exp(mu: float, k: int) -> float:
    term = total = 1.0
    for j in range(1, k + 1):
        term *= mu / j
        total += term
    return total


def check_bounds(spec: DistSpec, k: int, tol: float = BOUNDS_TOL) -> BoundsReport:
    """Evaluate both sides of the L1 sandwich at ``mu = mean(spec)``."""
    if k < 0:
        raise ValueError("k must be nonnegative")
    mu = mean(spec)
    partial = _partial_exp(mu, k)
    t_k = f_k(mu, k) - pmf(spec, 0) * partial
    lower = abs(t_k) / partial
    upper = math.exp(mu) * abs(t_k)
    l1 = l1_distance(spec)
    holds = lower - tol <= l1 <= upper + tol
    return BoundsReport(spec, k, mu, abs(t_k), l1, lower, upper, holds)


class Sign(str, Enum):
    NONNEGATIVE = "AllNonNegative"
    NONPOSITIVE = "AllNonPositive"
    MIXED = "MixedSign"


@dataclass(frozen=True)
class MembershipReport:
    sign: Sign
    witness: float | None = None
    d_min: float = 0.0
    d_max: float = 0.0

    @property
    def sign_constant(self) -> bool:
        return self.sign is not Sign.MIXED


def membership_check(spec: DistSpec, grid_size: int = 201) -> MembershipReport:
    """Sign of ``D`` on a uniform grid of ``[0, 1]``.

    Values within 1e-10 of zero count as zero; the zero function is
    reported as nonnegative.  For mixed signs, ``witness`` is the first grid
    point whose sign disagrees with the first signed value.
    """
    if grid_size < 2:
        raise ValueError("grid_size must be >= 2")
    t = np.linspace(0.0, 1.0, grid_size)
    d = np.asarray(d_func(spec, t), dtype=float)
    sgn = np.where(d > SIGN_TOL, 1, np.where(d < -SIGN_TOL, -1, 0))
    lo, hi = float(d.min()), float(d.max())
    if not np.any(sgn < 0):
        return MembershipReport(Sign.NONNEGATIVE, None, lo, hi)
    if not np.any(sgn > 0):
        return MembershipReport(Sign.NONPOSITIVE, None, lo, hi)
    first = sgn[np.nonzero(sgn)[0][0]]
    witness = float(t[np.nonzero(sgn == -first)[0][0]])
    return MembershipReport(Sign.MIXED, witness, lo, hi)

"""The level-profile functions f, tau = f^-1 and h = f(c - tau).

All functions accept scalars or numpy arrays.  ``tau`` and ``h^-1`` are
computed by vectorized bisection since neither has a closed-form inverse.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import DomainError

SQRT2 = math.sqrt(2.0)
C = 2.0 - SQRT2  # the water-filling competitive ratio
_F_SHIFT = (2.0 + SQRT2 - math.log(1.0 - C)) / 2.0

INVERSION_TOL = 1e-12
MAX_BISECTIONS = 200


def _check(x, lo, hi, name):
    arr = np.asarray(x, dtype=float)
    if np.isnan(arr).any() or (arr < lo).any() or (arr > hi).any():
        raise DomainError(f"{name} is defined on [{lo}, {hi}]")
    return arr


def _out(arr, like):
    return float(arr) if np.ndim(like) == 0 else arr


def _f_scalar(x: float) -> float:
    val = 0.5 * (math.log1p(-x) + math.log1p(x - C)) + 1.0 / (SQRT2 * (x - 1.0)) + _F_SHIFT
    return min(max(val, 0.0), 1.0)  # rounding can step just outside [0, 1]


def eval_f(phi):
    """f(phi) = (ln(1-phi) + ln(1-c+phi))/2 + 1/(sqrt2 (phi-1)) + const, for phi in [0, c]."""
    if isinstance(phi, float) and 0.0 <= phi <= C:
        return _f_scalar(phi)
    x = _check(phi, 0.0, C, "f")
    val = 0.5 * (np.log1p(-x) + np.log1p(x - C)) + 1.0 / (SQRT2 * (x - 1.0)) + _F_SHIFT
    return _out(np.clip(val, 0.0, 1.0), phi)


def eval_f_prime(phi):
    x = _check(phi, 0.0, C, "f'")
    val = 0.5 * (-1.0 / (1.0 - x) + 1.0 / (1.0 - C + x)) - 1.0 / (SQRT2 * (x - 1.0) ** 2)
    return _out(val, phi)


def _bisect_scalar(func, target, lo, hi, tol=INVERSION_TOL, max_iter=MAX_BISECTIONS):
    a, b = lo, hi
    for _ in range(max_iter):
        mid = 0.5 * (a + b)
        if func(mid) > target:
            a = mid
        else:
            b = mid
        if b - a <= tol:
            break
    return 0.5 * (a + b)


def _bisect_decreasing(func, target, lo, hi, tol=INVERSION_TOL, max_iter=MAX_BISECTIONS):
    """Solve func(z) = target for a decreasing func on [lo, hi], elementwise."""
    target = np.asarray(target, dtype=float)
    a = np.full(target.shape, lo, dtype=float)
    b = np.full(target.shape, hi, dtype=float)
    for _ in range(max_iter):
        mid = 0.5 * (a + b)
        above = func(mid) > target
        a = np.where(above, mid, a)
        b = np.where(above, b, mid)
        if np.all(b - a <= tol):
            break
    return 0.5 * (a + b)


def eval_tau(x):
    """Inverse of f: tau(x) in [0, c] with f(tau(x)) = x."""
    if isinstance(x, float) and 0.0 < x < 1.0:
        return _bisect_scalar(_f_scalar, x, 0.0, C)
    arr = _check(x, 0.0, 1.0, "tau")
    t = _bisect_decreasing(lambda z: eval_f(z), arr, 0.0, C)
    # exact endpoints: f(0) = 1 and f(c) = 0
    t = np.where(arr == 1.0, 0.0, np.where(arr == 0.0, C, t))
    return _out(t, x)


def eval_h(x):
    """h(x) = f(c - tau(x)); decreasing from h(0) = 1 to h(1) = 0."""
    if isinstance(x, float) and 0.0 < x < 1.0:
        return _f_scalar(min(max(C - eval_tau(x), 0.0), C))
    arr = _check(x, 0.0, 1.0, "h")
    val = eval_f(np.clip(C - eval_tau(arr), 0.0, C))
    val = np.where(arr == 0.0, 1.0, np.where(arr == 1.0, 0.0, val))
    return _out(val, x)


def eval_h_inv(y):
    """Inverse of h by bisection on h (h is decreasing)."""
    arr = _check(y, 0.0, 1.0, "h^-1")
    val = _bisect_decreasing(lambda z: eval_h(z), arr, 0.0, 1.0)
    val = np.where(arr == 1.0, 0.0, np.where(arr == 0.0, 1.0, val))
    return _out(val, y)


def f_ode_residual(phi):
    """1 - f(phi) + f(c - phi) + (1 - phi) f'(phi); zero for all phi in [0, c]."""
    x = np.asarray(phi, dtype=float)
    val = 1.0 - eval_f(x) + eval_f(C - x) + (1.0 - x) * eval_f_prime(x)
    return _out(np.asarray(val), phi)

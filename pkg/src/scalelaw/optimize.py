"""Small numerical kernel: BFGS, backtracking line search, golden section.

Deliberately dependency-free (numpy arrays only) so the fitting layer does
not pull in a full numerical library for three routines. The BFGS update is
the classic inverse-Hessian form

    H <- (I - rho s y^T) H (I - rho y s^T) + rho s s^T,   rho = 1 / (y^T s)

with the update skipped whenever the curvature y^T s is too small to trust.
The line search backtracks until the Armijo sufficient-decrease condition
f(x + a p) <= f(x) + c1 a g^T p holds, which keeps iterates strictly
descending; trial points with non-finite objective simply fail the
condition and trigger further backtracking.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import InvalidInput

Objective = Callable[[np.ndarray], float]
Gradient = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class MinimizeResult:
    x: np.ndarray
    fun: float
    n_iter: int
    converged: bool


def central_difference_gradient(f: Objective, x: np.ndarray, rel_step: float = 1e-6) -> np.ndarray:
    """Central finite differences with a per-coordinate relative step.

    Step h_i = rel_step * max(1, |x_i|), symmetric two-point stencil.
    """
    x = np.asarray(x, dtype=float)
    grad = np.empty_like(x)
    for i in range(x.size):
        h = rel_step * max(1.0, abs(x[i]))
        left = x.copy()
        right = x.copy()
        left[i] -= h
        right[i] += h
        grad[i] = (f(right) - f(left)) / (2.0 * h)
    return grad


def minimize_bfgs(
    f: Objective,
    x0: np.ndarray,
    grad: Gradient | None = None,
    *,
    gtol: float = 1e-10,
    max_iter: int = 500,
    armijo_c1: float = 1e-4,
    backtrack: float = 0.5,
    max_backtracks: int = 40,
) -> MinimizeResult:
    """Quasi-Newton minimization from a single start.

    Falls back to central differences when no analytic gradient is given.
    Convergence is declared on the sup-norm of the gradient; a start whose
    objective is non-finite returns immediately with converged=False and
    fun=inf so multi-start callers can discard it.
    """
    x = np.asarray(x0, dtype=float).copy()
    g_of = grad if grad is not None else (lambda z: central_difference_gradient(f, z))

    fx = f(x)
    if not np.isfinite(fx):
        return MinimizeResult(x=x, fun=float("inf"), n_iter=0, converged=False)
    g = np.asarray(g_of(x), dtype=float)
    if not np.all(np.isfinite(g)):
        return MinimizeResult(x=x, fun=float(fx), n_iter=0, converged=False)

    n = x.size
    eye = np.eye(n)
    h_inv = eye.copy()

    for iteration in range(1, max_iter + 1):
        if np.max(np.abs(g)) <= gtol:
            return MinimizeResult(x=x, fun=float(fx), n_iter=iteration - 1, converged=True)

        p = -h_inv @ g
        slope = float(g @ p)
        if slope >= 0:  # numerical loss of descent; reset curvature model
            h_inv = eye.copy()
            p = -g
            slope = float(g @ p)
            if slope >= 0:
                return MinimizeResult(x=x, fun=float(fx), n_iter=iteration, converged=bool(np.max(np.abs(g)) <= gtol))

        step = 1.0
        fx_new = None
        for _ in range(max_backtracks):
            trial = x + step * p
            f_trial = f(trial)
            if np.isfinite(f_trial) and f_trial <= fx + armijo_c1 * step * slope:
                fx_new = f_trial
                break
            step *= backtrack
        if fx_new is None:
            # no acceptable step along p; treat current point as final
            return MinimizeResult(x=x, fun=float(fx), n_iter=iteration, converged=False)

        x_new = x + step * p
        g_new = np.asarray(g_of(x_new), dtype=float)
        if not np.all(np.isfinite(g_new)):
            return MinimizeResult(x=x_new, fun=float(fx_new), n_iter=iteration, converged=False)

        s = x_new - x
        y = g_new - g
        ys = float(y @ s)
        if ys > 1e-12 * float(np.linalg.norm(y)) * float(np.linalg.norm(s)) and ys > 0:
            rho = 1.0 / ys
            left = eye - rho * np.outer(s, y)
            h_inv = left @ h_inv @ left.T + rho * np.outer(s, s)
        x, fx, g = x_new, float(fx_new), g_new

    return MinimizeResult(x=x, fun=float(fx), n_iter=max_iter, converged=bool(np.max(np.abs(g)) <= gtol))


_INV_GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0  # 1/phi


def golden_section_minimize(
    f: Callable[[float], float],
    lo: float,
    hi: float,
    *,
    tol: float = 1e-10,
    max_iter: int = 500,
) -> tuple[float, float]:
    """Minimize a unimodal scalar function on [lo, hi].

    Returns (argmin, minimum). Interval shrinks by 1/phi per iteration until
    its width falls below tol * max(1, |argmin|).
    """
    if not hi > lo:
        raise InvalidInput(f"need lo < hi, got [{lo}, {hi}]")
    a, b = float(lo), float(hi)
    c = b - _INV_GOLDEN * (b - a)
    d = a + _INV_GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if (b - a) <= tol * max(1.0, abs(a) + abs(b)) / 2.0:
            break
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _INV_GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INV_GOLDEN * (b - a)
            fd = f(d)
    x = (a + b) / 2.0
    return x, f(x)

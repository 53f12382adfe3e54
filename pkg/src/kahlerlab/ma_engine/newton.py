"""Damped Newton iteration with Armijo backtracking on the sup-norm residual."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse.linalg as spla

from ..errors import NonConvergenceError


@dataclass
class NewtonResult:
    x: np.ndarray
    residual: float
    iterations: int
    restarts: int
    history: list[float] = field(default_factory=list)


def _sup(r: np.ndarray) -> float:
    return float(np.max(np.abs(r))) if np.all(np.isfinite(r)) else np.inf


def damped_newton(residual: Callable[[np.ndarray], np.ndarray], jacobian: Callable, x0: np.ndarray,
                  tol: float = 1e-8, max_iter: int = 60, max_restarts: int = 5,
                  armijo: float = 1e-4, min_step: float = 2.0 ** -12) -> NewtonResult:
    """Solve residual(x) = 0.

    On a failed line search the iteration restarts from x0 with the largest
    allowed step halved; after max_restarts restarts NonConvergenceError is
    raised carrying the best residual seen.
    """
    best = np.inf
    max_step = 1.0
    for restart in range(max_restarts + 1):
        x = np.array(x0, dtype=float)
        r = residual(x)
        norm = _sup(r)
        history = [norm]
        failed = False
        for it in range(max_iter):
            if norm <= tol:
                return NewtonResult(x, norm, it, restart, history)
            try:
                dx = spla.spsolve(jacobian(x).tocsc(), -r)
            except (RuntimeError, ValueError):
                failed = True
                break
            if not np.all(np.isfinite(dx)):
                failed = True
                break
            step = max_step
            while step >= min_step:
                trial = x + step * dx
                with np.errstate(over="ignore", invalid="ignore"):
                    rt = residual(trial)
                nt = _sup(rt)
                if nt <= (1 - armijo * step) * norm:
                    break
                step *= 0.5
            else:
                failed = True
                break
            x, r, norm = trial, rt, nt
            history.append(norm)
            best = min(best, norm)
        if not failed and norm <= tol:
            return NewtonResult(x, norm, max_iter, restart, history)
        best = min(best, norm)
        max_step *= 0.5
    raise NonConvergenceError(f"damped Newton did not reach {tol:g} after {max_restarts} restarts "
                              f"(best residual {best:.3g})")

"""ε-regularized Monge–Ampère path on the sphere with log poles at 0 and ∞.

The reference metric ω has density f_ref.  For each ε we solve

    f_ref + ψ'' = e^{F_ε + c} f_ref,      F_ε = Σ a_i ℓ_ε(p_i) - Σ b_j ℓ_ε(q_j) + Ψ

where ℓ_ε(0) = log((|z|²+ε²)/(1+|z|²)) is the regularized quasi-psh log
pole at z = 0 (ℓ_ε(∞) is its image under z -> 1/z), Ψ an optional
user-supplied density offset, and the constant c keeps the total area fixed.
Unknowns are ψ and c; ψ' = 0 at both ends and ∫ ψ f_ref = 0 fix the gauge.
In complex dimension one the operator is linear in ψ, so Newton is driven
by the exponential dependence on c only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp

from ..errors import ContinuityPathError, NonConvergenceError, ValidationError
from .newton import damped_newton
from .profile import CONVENTIONS, RadialProfile, diff_matrices, quad_weights

DEFAULT_SCHEDULE = tuple(10.0 ** -k for k in range(1, 7))
MARGIN = 8.0


@dataclass(frozen=True)
class LogPole:
    location: str
    coefficient: float

    def __post_init__(self):
        if self.location not in ("zero", "infinity"):
            raise ValidationError("pole location must be 'zero' or 'infinity'")

    def regularized(self, s: np.ndarray, eps: float) -> np.ndarray:
        x = s if self.location == "zero" else -s
        return np.logaddexp(x, 2 * math.log(eps)) - np.logaddexp(0.0, x)


@dataclass
class ContinuityPath:
    epsilon_schedule: tuple[float, ...] = DEFAULT_SCHEDULE
    psi_plus: tuple[LogPole, ...] = ()
    psi_minus: tuple[LogPole, ...] = ()
    density_offset: Callable[[np.ndarray], np.ndarray] | None = None
    tol: float = 1e-10

    def __post_init__(self):
        eps = [float(e) for e in self.epsilon_schedule]
        if not eps or any(e <= 0 for e in eps):
            raise ValidationError("ε schedule must be nonempty and positive")
        if any(b >= a for a, b in zip(eps, eps[1:])):
            raise ValidationError("ε schedule must be strictly decreasing")
        self.epsilon_schedule = tuple(eps)
        self.psi_plus = tuple(self.psi_plus)
        self.psi_minus = tuple(self.psi_minus)
        for p in self.psi_plus:
            if not p.coefficient > 0:
                raise ValidationError("ψ₊ pole coefficients must be positive")
        for p in self.psi_minus:
            if not 0 < p.coefficient < 1:
                raise ValidationError(f"ψ₋ pole coefficient {p.coefficient} violates the klt bound 0 < b < 1")

    @classmethod
    def from_json(cls, data: dict) -> "ContinuityPath":
        def poles(key):
            try:
                return tuple(LogPole(p.get("location", "zero"), float(p["coefficient"])) for p in data.get(key, []))
            except (KeyError, TypeError) as exc:
                raise ValidationError(f"malformed pole list {key}: {exc}") from exc
        kw = {"psi_plus": poles("psi_plus"), "psi_minus": poles("psi_minus")}
        if "epsilon_schedule" in data:
            kw["epsilon_schedule"] = tuple(float(e) for e in data["epsilon_schedule"])
        if "density_offset" in data:
            c = float(data["density_offset"])
            kw["density_offset"] = lambda s, c=c: np.full_like(s, c)
        return cls(**kw)

    def log_density(self, s: np.ndarray, eps: float) -> np.ndarray:
        F = np.zeros_like(s)
        for p in self.psi_plus:
            F += p.coefficient * p.regularized(s, eps)
        for p in self.psi_minus:
            F -= p.coefficient * p.regularized(s, eps)
        if self.density_offset is not None:
            F += np.asarray(self.density_offset(s), dtype=float)
        return F


def _solve_one(initial: RadialProfile, F: np.ndarray, x0: np.ndarray, tol: float):
    s, f_ref = initial.s, initial.density
    n = len(s)
    d1, d2 = diff_matrices(n, initial.h)
    w = quad_weights(s)

    def residual(x):
        psi, c = x[:-1], x[-1]
        r = d2 @ psi + f_ref - np.exp(F + c) * f_ref
        r[0] = (d1 @ psi)[0]
        r[-1] = (d1 @ psi)[-1]
        return np.append(r, w @ (psi * f_ref))

    def jacobian(x):
        c = x[-1]
        body = d2.tolil()
        body[0, :] = d1[0, :]
        body[n - 1, :] = d1[n - 1, :]
        col = -np.exp(F + c) * f_ref
        col[0] = col[-1] = 0.0
        top = sp.hstack([body.tocsr(), sp.csr_matrix(col.reshape(-1, 1))])
        bottom = sp.csr_matrix(np.append(w * f_ref, 0.0).reshape(1, -1))
        return sp.vstack([top, bottom]).tocsr()

    return damped_newton(residual, jacobian, x0, tol=tol)


def continuity_path_run(path: ContinuityPath, initial: RadialProfile) -> RadialProfile:
    """Follow the ε schedule, warm-starting each solve from the previous one.

    The returned profile carries a report in metadata["continuity"] with the
    per-ε residuals, normalizing constants, sup|ψ| (the empirical C⁰ bound)
    and sup distances between successive profiles.
    """
    s = initial.s
    need = 2 * abs(math.log(path.epsilon_schedule[-1])) + MARGIN
    if -s[0] < need or s[-1] < need:
        raise ValidationError(f"grid half-width {min(-s[0], s[-1]):.3g} too small for ε = "
                              f"{path.epsilon_schedule[-1]:g}; need at least {need:.3g}")
    area0 = initial.area()
    x = np.zeros(len(s) + 1)
    steps = []
    prev = None
    result = None
    for i, eps in enumerate(path.epsilon_schedule):
        F = path.log_density(s, eps)
        # start c at its continuum value so the area constraint is nearly met
        g = RadialProfile(s, np.exp(F) * initial.density, initial.cone)
        x[-1] = math.log(area0 / g.area())
        try:
            res = _solve_one(initial, F, x, path.tol)
        except NonConvergenceError as exc:
            raise ContinuityPathError(f"Newton failed at ε = {eps:g}: {exc}", i, result) from exc
        x = res.x
        psi, c = x[:-1], float(x[-1])
        density = np.exp(F + c) * initial.density
        step = {"epsilon": eps, "residual": res.residual, "iterations": res.iterations,
                "normalizing_constant": c, "c0_bound": float(np.max(np.abs(psi)))}
        current = RadialProfile(s, density, initial.cone)
        step["sup_distance_to_previous"] = None if prev is None else current.sup_distance(prev)
        steps.append(step)
        prev = current
        meta = {"continuity": {"steps": [dict(t) for t in steps], "completed": i + 1,
                               "reference_area": area0},
                "conventions": CONVENTIONS}
        result = RadialProfile(s, density, initial.cone, metadata=meta)
    return result


def successive_distances(p: RadialProfile) -> list[float]:
    return [t["sup_distance_to_previous"] for t in p.metadata["continuity"]["steps"][1:]]

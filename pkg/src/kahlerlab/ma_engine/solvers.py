"""Kähler–Einstein and Kähler–Ricci soliton profiles on the (conical) sphere.

With u = log f the reduced equations are

    KE:       u'' + λ e^u = 0
    soliton:  u'' + λ e^u + a (e^u)' = 0        (X = a z ∂_z, θ_X' = a f)

with λ = 2π(β₀+β_∞)/area.  Both are invariant under s -> s + c (dilations
of the sphere), so a gauge ∫ s f ds = 0 is imposed.  For KE the extra
equation is balanced by a multiplier μ on a fixed odd forcing; a true
solution has μ = 0, and a multiplier that cannot vanish (unequal cone
angles) is reported as a suspected obstruction.  For the soliton the field
coefficient a plays that role.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ..errors import NonConvergenceError, ObstructionSuspectedError, ValidationError
from .newton import damped_newton
from .profile import (CONVENTIONS, DEFAULT_NODES, RadialProfile, default_half_width, diff_matrices,
                      football_density, make_grid, quad_weights, reference_shape)

MULTIPLIER_TOL = 1e-6


def _check_cone(cone):
    b0, binf = (float(c) for c in cone)
    if not (0 < b0 <= 1 and 0 < binf <= 1):
        raise ValidationError("cone angles must lie in (0, 1]")
    return b0, binf


@dataclass
class _System:
    s: np.ndarray
    cone: tuple[float, float]
    lam: float

    def __post_init__(self):
        self.n = len(self.s)
        self.h = float(self.s[1] - self.s[0])
        self.d1, self.d2 = diff_matrices(self.n, self.h)
        self.q, self.dq, self.d2q = reference_shape(self.s, self.cone)
        self.w = quad_weights(self.s)
        k = min(self.cone)
        x = 0.5 * k * self.s
        # odd, localized forcing used only to absorb the translation mode
        self.forcing = np.tanh(x) / np.cosh(x) ** 2
        self.inner = slice(1, self.n - 1)

    def guess(self) -> np.ndarray:
        beta = 0.5 * sum(self.cone)
        return np.log(football_density(self.s, beta, self.lam)) - self.q


def _bc_rows(sys: _System, u: np.ndarray, du: np.ndarray, a: float, exact: bool):
    """Boundary residuals and their derivatives with respect to u at the end nodes."""
    b0, binf = sys.cone
    lam = sys.lam
    f0, f1 = math.exp(u[0]), math.exp(u[-1])
    if exact:
        # first integral of the Liouville equation: u'^2/2 + λ e^u = β^2/2
        g0, g1 = b0 ** 2 - 2 * lam * f0, binf ** 2 - 2 * lam * f1
        if g0 <= 0 or g1 <= 0:
            return np.array([np.nan, np.nan]), (0.0, 0.0)
        r0 = du[0] - math.sqrt(g0)
        r1 = du[-1] + math.sqrt(g1)
        return np.array([r0, r1]), (lam * f0 / math.sqrt(g0), -lam * f1 / math.sqrt(g1))
    # integrated soliton equation with exponential tails: u' + λF + a f = β₀
    r0 = du[0] - (b0 - lam * f0 / b0 - a * f0)
    r1 = du[-1] - (-binf + lam * f1 / binf - a * f1)
    return np.array([r0, r1]), ((lam / b0 + a) * f0, -(lam / binf - a) * f1)


def _residual(sys: _System, v: np.ndarray, extra: float, a_fixed: float | None, exact: bool):
    u = v + sys.q
    f = np.exp(u)
    du = sys.d1 @ v + sys.dq
    d2u = sys.d2 @ v + sys.d2q
    a = extra if a_fixed is None else a_fixed
    interior = d2u + sys.lam * f + a * f * du
    if a_fixed is not None:
        interior = interior + extra * sys.forcing
    bc, _ = _bc_rows(sys, u, du, a, exact=exact)
    gauge = float(sys.w @ (sys.s * f))
    return np.concatenate([[bc[0]], interior[sys.inner], [bc[1]], [gauge]])


def _jacobian(sys: _System, v: np.ndarray, extra: float, a_fixed: float | None, exact: bool):
    n = sys.n
    u = v + sys.q
    f = np.exp(u)
    du = sys.d1 @ v + sys.dq
    a = extra if a_fixed is None else a_fixed
    body = sys.d2 + sp.diags(sys.lam * f + a * f * du) + a * sp.diags(f) @ sys.d1
    body = body.tolil()
    _, (g0, g1) = _bc_rows(sys, u, du, a, exact=exact)
    body[0, :] = sys.d1[0, :]
    body[0, 0] = body[0, 0] - g0
    body[n - 1, :] = sys.d1[n - 1, :]
    body[n - 1, n - 1] = body[n - 1, n - 1] - g1
    if a_fixed is None:
        col = f * du
        col[0], col[-1] = f[0], f[-1]
    else:
        col = sys.forcing.copy()
        col[0] = col[-1] = 0.0
    gauge = sys.w * sys.s * f
    top = sp.hstack([body.tocsr(), sp.csr_matrix(col.reshape(-1, 1))])
    bottom = sp.csr_matrix(np.concatenate([gauge, [0.0]]).reshape(1, -1))
    return sp.vstack([top, bottom]).tocsr()


def _solve(cone, total_area, half_width, nodes, tol, a_fixed, exact, initial=None):
    b0, binf = _check_cone(cone)
    if total_area is None:
        total_area = 2 * math.pi * (b0 + binf)
    if total_area <= 0:
        raise ValidationError("total area must be positive")
    lam = 2 * math.pi * (b0 + binf) / total_area
    s = make_grid(half_width or default_half_width((b0, binf)), nodes)
    sys = _System(s, (b0, binf), lam)
    v0 = sys.guess() if initial is None else np.log(initial) - sys.q
    x0 = np.concatenate([v0, [0.0]])
    res = damped_newton(lambda x: _residual(sys, x[:-1], x[-1], a_fixed, exact),
                        lambda x: _jacobian(sys, x[:-1], x[-1], a_fixed, exact), x0, tol=tol)
    v, extra = res.x[:-1], float(res.x[-1])
    f = np.exp(v + sys.q)
    return sys, f, extra, res


def ke_solve_radial(cone=(1.0, 1.0), total_area: float | None = None, half_width: float | None = None,
                    nodes: int = DEFAULT_NODES, tol: float = 1e-8, initial=None) -> RadialProfile:
    """Rotationally symmetric solution of Ric(ω) = λω with the given cone angles.

    `initial` is an optional starting density on the solver grid; by default
    Newton starts from the football with the mean cone angle.
    """
    if initial is not None:
        initial = np.asarray(initial, dtype=float)
        if initial.shape != (nodes,) or np.any(initial <= 0):
            raise ValidationError(f"initial density must be positive with {nodes} samples")
    try:
        sys, f, mu, res = _solve(cone, total_area, half_width, nodes, tol, a_fixed=0.0, exact=True,
                                 initial=initial)
    except NonConvergenceError as exc:
        raise ObstructionSuspectedError(f"KE continuity failed for cone angles {tuple(cone)}: {exc}") from exc
    if abs(mu) > MULTIPLIER_TOL:
        raise ObstructionSuspectedError(
            f"no rotationally symmetric KE profile for cone angles {tuple(cone)}: "
            f"translation multiplier stays at {mu:.3g}")
    meta = {"solver": "damped-newton", "iterations": res.iterations, "restarts": res.restarts,
            "residual": res.residual, "multiplier": mu, "lambda": sys.lam, "conventions": CONVENTIONS}
    return RadialProfile(sys.s, f, sys.cone, metadata=meta)


@dataclass
class SolitonData:
    vector_field_coefficient: float
    theta_potential: np.ndarray

    def contraction_defect(self, p: RadialProfile) -> float:
        """sup |θ_X' - a f|, the reduced form of i_X ω = √-1 ∂̄θ_X."""
        d1, _ = diff_matrices(len(p.s), p.h)
        return float(np.max(np.abs(d1 @ self.theta_potential - self.vector_field_coefficient * p.density)))


def theta_potential(p: RadialProfile, a: float) -> np.ndarray:
    """θ_X = a φ'(s), normalized to vanish at s = -∞ (φ' is the cumulative integral of f)."""
    d1, _ = diff_matrices(len(p.s), p.h)
    f = p.density
    # integrate f exactly against the 4th-order derivative matrix: solve D1 Φ = f with Φ(-S) = tail
    lhs = d1.tolil()
    lhs[0, :] = 0.0
    lhs[0, 0] = 1.0
    rhs = f.copy()
    rhs[0] = f[0] / p.cone[0]
    return a * spla.spsolve(lhs.tocsc(), rhs)


def soliton_solve_radial(cone=(1.0, 1.0), soliton_coefficient_search: bool = True, coefficient: float = 0.0,
                         half_width: float | None = None, nodes: int = DEFAULT_NODES,
                         tol: float = 1e-8) -> tuple[RadialProfile, SolitonData]:
    """Solve u'' + e^u + a (e^u)' = 0 for the profile and (optionally) the field coefficient a."""
    a_fixed = None if soliton_coefficient_search else float(coefficient)
    try:
        sys, f, extra, res = _solve(cone, None, half_width, nodes, tol, a_fixed=a_fixed, exact=False)
    except NonConvergenceError as exc:
        raise ObstructionSuspectedError(f"soliton solve failed for cone angles {tuple(cone)}: {exc}") from exc
    if a_fixed is None:
        a = extra
    else:
        a = a_fixed
        if abs(extra) > MULTIPLIER_TOL:
            raise ObstructionSuspectedError(f"fixed coefficient a={a} leaves multiplier {extra:.3g}")
    meta = {"solver": "damped-newton", "iterations": res.iterations, "residual": res.residual,
            "vector_field_coefficient": a, "lambda": sys.lam, "conventions": CONVENTIONS}
    prof = RadialProfile(sys.s, f, sys.cone, metadata=meta)
    return prof, SolitonData(a, theta_potential(prof, a))


def soliton_residual(p: RadialProfile, a: float, lam: float = 1.0, forcing: np.ndarray | None = None) -> np.ndarray:
    """Interior residual of u'' + λe^u + a(e^u)' (minus an optional manufactured forcing)."""
    d1, d2 = diff_matrices(len(p.s), p.h)
    q, dq, d2q = reference_shape(p.s, p.cone)
    v = np.log(p.density) - q
    du = d1 @ v + dq
    r = d2 @ v + d2q + lam * p.density + a * p.density * du
    if forcing is not None:
        r = r - forcing
    return r[1:-1]


def ke_residual(p: RadialProfile, lam: float = 1.0) -> float:
    return float(np.max(np.abs(soliton_residual(p, 0.0, lam))))

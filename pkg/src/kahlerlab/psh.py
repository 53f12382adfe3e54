"""Pluripotential estimators on balls in C^n, n in {1, 2}.

A weight is w = Σ λ_i log|z - p_i|^2 + c log Σ|z^a|^2 + smooth(z), and the
curvature current is dd^c w with dd^c normalized so that dd^c log|z|^2 has
Lelong number 1 at the origin.

Two facts drive every estimator here.  The normalized mass of dd^c w in the
ball B(p, r) equals (r/2) times the sphere-average of the radial derivative
∂_r w over S(p, r) (Lelong–Jensen), which by the divergence theorem is
r/(2|S_r|) ∫_{B_r} Δw.  And ∫ e^{-α w} near an isolated singular point is
finite exactly when the contribution of dyadic shells decays geometrically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
from scipy.special import logsumexp

from .errors import EstimateUnstableError, ValidationError

DEFAULT_ALPHA_MAX = 10.0


# smooth presets: (value, euclidean laplacian in R^{2n}), both as functions of z - center
def _quadratic(z):
    return np.sum(np.abs(z) ** 2, axis=-1)


def _quadratic_lap(z):
    return np.full(z.shape[:-1], 4.0 * z.shape[-1])


def _log1p(z):
    return np.log1p(np.sum(np.abs(z) ** 2, axis=-1))


def _log1p_lap(z):
    t = np.sum(np.abs(z) ** 2, axis=-1)
    N = 2 * z.shape[-1]
    return -4.0 * t / (1 + t) ** 2 + 2.0 * N / (1 + t)


def _pluriharmonic(z):
    return np.real(z[..., 0]) + 0.5 * np.imag(z[..., 0] ** 2)


def _zero(z):
    return np.zeros(z.shape[:-1])


SMOOTH_PRESETS: dict[str, tuple[Callable, Callable]] = {
    "zero": (_zero, _zero),
    "quadratic": (_quadratic, _quadratic_lap),
    "log1p": (_log1p, _log1p_lap),
    "pluriharmonic": (_pluriharmonic, _zero),
}


@dataclass(frozen=True)
class Pole:
    center: tuple[complex, ...]
    lam: float


@dataclass(frozen=True)
class AlgebraicTerm:
    """coefficient * log Σ_i |z^{a_i}|^2, singular only at the origin."""

    monomials: tuple[tuple[int, ...], ...]
    coefficient: float

    def value(self, z):
        with np.errstate(divide="ignore"):
            terms = [sum(2 * ai * np.log(np.abs(z[..., i])) for i, ai in enumerate(a) if ai) + np.zeros(z.shape[:-1])
                     for a in self.monomials]
        return self.coefficient * logsumexp(np.stack(terms, axis=0), axis=0)


@dataclass(frozen=True)
class PshWeight:
    dim: int = 1
    poles: tuple[Pole, ...] = ()
    algebraic: AlgebraicTerm | None = None
    smooth: str = "zero"
    smooth_scale: float = 1.0
    smooth_center: tuple[complex, ...] | None = None
    domain_radius: float = 1.0

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValidationError("weights live in C^1 or C^2")
        if self.smooth not in SMOOTH_PRESETS:
            raise ValidationError(f"unknown smooth preset {self.smooth!r}; choose from {sorted(SMOOTH_PRESETS)}")
        for p in self.poles:
            if len(p.center) != self.dim:
                raise ValidationError("pole center has wrong dimension")
            if p.lam < 0:
                raise ValidationError("pole coefficients must be nonnegative")
        if self.algebraic is not None:
            for i in range(self.dim):
                if not any(a[i] > 0 and sum(a) == a[i] for a in self.algebraic.monomials):
                    raise ValidationError("algebraic part must have an isolated zero (a pure power of each variable)")
            pure = [next(a[i] for a in self.algebraic.monomials if a[i] > 0 and sum(a) == a[i])
                    for i in range(self.dim)]
            if any(sum(ai / pi for ai, pi in zip(a, pure)) < 1 for a in self.algebraic.monomials):
                raise ValidationError("algebraic monomials must lie on or above the face spanned by the pure powers")
            if any(np.linalg.norm(np.asarray(p.center)) < 1e-14 for p in self.poles):
                raise ValidationError("a log pole at the origin cannot be combined with an algebraic part")
            if self.algebraic.coefficient < 0:
                raise ValidationError("algebraic coefficient must be nonnegative")
        if self.domain_radius <= 0:
            raise ValidationError("domain radius must be positive")

    @property
    def _smooth_center(self) -> np.ndarray:
        if self.smooth_center is None:
            return np.zeros(self.dim, dtype=complex)
        return np.asarray(self.smooth_center, dtype=complex)

    def smooth_value(self, z):
        return self.smooth_scale * SMOOTH_PRESETS[self.smooth][0](z - self._smooth_center)

    def smooth_laplacian(self, z):
        return self.smooth_scale * SMOOTH_PRESETS[self.smooth][1](z - self._smooth_center)

    def __call__(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=complex)
        out = self.smooth_value(z)
        for p in self.poles:
            out = out + p.lam * np.log(np.sum(np.abs(z - np.asarray(p.center)) ** 2, axis=-1))
        if self.algebraic is not None:
            out = out + self.algebraic.value(z)
        return out

    def scaled(self, c: float) -> "PshWeight":
        alg = None
        if self.algebraic is not None:
            alg = AlgebraicTerm(self.algebraic.monomials, c * self.algebraic.coefficient)
        return PshWeight(self.dim, tuple(Pole(p.center, c * p.lam) for p in self.poles), alg,
                         self.smooth, c * self.smooth_scale, self.smooth_center, self.domain_radius)

    def shifted(self, v: Sequence[complex]) -> "PshWeight":
        """The weight z -> w(z - v); the domain moves with it."""
        if self.algebraic is not None:
            raise ValidationError("algebraic terms are anchored at the origin and cannot be shifted")
        v = np.asarray(v, dtype=complex)
        poles = tuple(Pole(tuple(np.asarray(p.center) + v), p.lam) for p in self.poles)
        return PshWeight(self.dim, poles, None, self.smooth, self.smooth_scale,
                         tuple(self._smooth_center + v), self.domain_radius)

    def __add__(self, other: "PshWeight") -> "PshWeight":
        if self.dim != other.dim:
            raise ValidationError("dimension mismatch")
        if (self.smooth != "zero" and other.smooth != "zero") or self.algebraic or other.algebraic:
            raise ValidationError("sums support at most one smooth preset and no algebraic terms")
        smooth_src = self if self.smooth != "zero" else other
        return PshWeight(self.dim, self.poles + other.poles, None, smooth_src.smooth, smooth_src.smooth_scale,
                         smooth_src.smooth_center, min(self.domain_radius, other.domain_radius))

    def singular_centers(self) -> list[np.ndarray]:
        centers = [np.asarray(p.center, dtype=complex) for p in self.poles if p.lam > 0]
        if self.algebraic is not None and self.algebraic.coefficient > 0:
            centers.append(np.zeros(self.dim, dtype=complex))
        unique: list[np.ndarray] = []
        for c in centers:
            if not any(np.allclose(c, u, atol=1e-14) for u in unique):
                unique.append(c)
        return unique

    @classmethod
    def from_json(cls, data: dict) -> "PshWeight":
        try:
            dim = int(data.get("dim", 1))
            poles = tuple(Pole(_read_point(p["center"], dim), float(p["lambda"])) for p in data.get("poles", []))
            alg = None
            if data.get("algebraic"):
                a = data["algebraic"]
                alg = AlgebraicTerm(tuple(tuple(int(x) for x in m) for m in a["monomials"]),
                                    float(a.get("coefficient", 1.0)))
            return cls(dim, poles, alg, data.get("smooth", "zero"), float(data.get("smooth_scale", 1.0)),
                       None, float(data.get("domain_radius", 1.0)))
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ValidationError):
                raise
            raise ValidationError(f"malformed weight JSON: {exc}") from exc


def _read_point(coords, dim) -> tuple[complex, ...]:
    coords = [float(x) for x in coords]
    if len(coords) != 2 * dim:
        raise ValidationError(f"point needs {2 * dim} real coordinates")
    return tuple(complex(coords[2 * i], coords[2 * i + 1]) for i in range(dim))


@lru_cache(maxsize=None)
def _sphere_rule(dim: int, m: int = 48):
    """Unit-sphere nodes in C^dim with weights summing to 1."""
    if dim == 1:
        th = 2 * np.pi * (np.arange(m) + 0.5) / m
        return np.exp(1j * th)[:, None], np.full(m, 1.0 / m)
    # Hopf coordinates; t = |z_1|^2 is uniformly distributed on S^3
    t, wt = np.polynomial.legendre.leggauss(m // 2)
    t, wt = 0.5 * (t + 1), 0.5 * wt
    th = 2 * np.pi * (np.arange(m // 2) + 0.5) / (m // 2)
    T, A, B = np.meshgrid(t, th, th, indexing="ij")
    W = np.broadcast_to(wt[:, None, None], T.shape) / (m // 2) ** 2
    nodes = np.stack([np.sqrt(T) * np.exp(1j * A), np.sqrt(1 - T) * np.exp(1j * B)], axis=-1)
    return nodes.reshape(-1, 2), W.reshape(-1)


def _sphere_area(dim: int, r: float) -> float:
    N = 2 * dim
    return 2 * math.pi ** (N / 2) / math.gamma(N / 2) * r ** (N - 1)


def _check_ball(w: PshWeight, p: np.ndarray, r: float):
    if r <= 0:
        raise ValidationError("radius must be positive")
    if np.linalg.norm(p) + r > w.domain_radius * (1 + 1e-12):
        raise ValidationError(f"ball of radius {r} around {p} leaves the domain of radius {w.domain_radius}")


def _radial_flux(func, p, r, dim, h_rel=1e-4):
    """Sphere-average of ∂_r func over S(p, r) by a 4th-order central difference."""
    nodes, wts = _sphere_rule(dim)
    h = h_rel * r
    vals = [func(p + (r + k * h) * nodes) for k in (-2, -1, 1, 2)]
    d = (vals[0] - 8 * vals[1] + 8 * vals[2] - vals[3]) / (12 * h)
    return float(np.dot(wts, d))


def mass_ratio(w: PshWeight, p, r: float) -> float:
    """Normalized mass r^{-2(n-1)} ∫_{B(p,r)} dd^c w ∧ (dd^c|z|^2)^{n-1}."""
    p = np.asarray(p, dtype=complex).reshape(w.dim)
    _check_ball(w, p, r)
    total = 0.0
    for pole in w.poles:
        q = np.asarray(pole.center, dtype=complex)
        d = float(np.linalg.norm(q - p))
        if d < 1e-14:
            total += pole.lam
        elif abs(d - r) < 1e-9 * r:
            raise ValidationError("a pole lies on the sphere of integration")
        elif w.dim == 1:
            total += pole.lam if d < r else 0.0
        else:
            total += 0.5 * r * _radial_flux(lambda z: pole.lam * np.log(np.sum(np.abs(z - q) ** 2, axis=-1)),
                                            p, r, w.dim)
    if w.algebraic is not None:
        if np.linalg.norm(p) < 1e-14:
            lead = min(sum(a) for a in w.algebraic.monomials)
            # the algebraic term is lead*log|z|^2 plus a function bounded near 0 only when it is homogeneous
            if len({sum(a) for a in w.algebraic.monomials}) == 1:
                total += w.algebraic.coefficient * lead
            else:
                total += 0.5 * r * _radial_flux(w.algebraic.value, p, r, w.dim)
        else:
            total += 0.5 * r * _radial_flux(w.algebraic.value, p, r, w.dim)
    total += _smooth_mass(w, p, r)
    return total


def _smooth_mass(w: PshWeight, p: np.ndarray, r: float, m_rad: int = 16) -> float:
    if w.smooth == "zero" or w.smooth_scale == 0:
        return 0.0
    nodes, wts = _sphere_rule(w.dim)
    x, xw = np.polynomial.legendre.leggauss(m_rad)
    rho, rw = 0.5 * r * (x + 1), 0.5 * r * xw
    integral = 0.0
    for rk, wk in zip(rho, rw):
        lap = w.smooth_laplacian(p + rk * nodes)
        integral += wk * _sphere_area(w.dim, rk) * float(np.dot(wts, lap))
    return r / (2 * _sphere_area(w.dim, r)) * integral


@dataclass
class LelongEstimate:
    value: float
    r_schedule: list[float]
    slope_value: float
    masses: list[float] = field(default_factory=list)

    @property
    def discrepancy(self) -> float:
        return abs(self.value - self.slope_value)

    def to_json(self) -> dict:
        return {"value": self.value, "slope_value": self.slope_value, "discrepancy": self.discrepancy,
                "r_schedule": self.r_schedule, "masses": self.masses}


def r_schedule(domain_radius: float, levels: int = 9) -> list[float]:
    r0 = 0.2 * domain_radius
    return [r0 * 2.0 ** (-j) for j in range(levels)]


def lelong_number(w: PshWeight, p, tail: int = 5, tol: float = 1e-2) -> LelongEstimate:
    """Lelong number at p from the mass ratio limit and from the log-slope of w."""
    p = np.asarray(p, dtype=complex).reshape(w.dim)
    radii = r_schedule(w.domain_radius)
    masses = [mass_ratio(w, p, r) for r in radii]
    # extrapolate linearly in 1/log(1/r) over the innermost radii
    xs = np.array([1.0 / math.log(1.0 / r) for r in radii[-tail:]])
    ys = np.array(masses[-tail:])
    slope, intercept = np.polyfit(xs, ys, 1)
    fitted = slope * xs + intercept
    if np.max(np.abs(fitted - ys)) > tol:
        raise EstimateUnstableError(f"mass ratios do not settle on the r-schedule (spread {np.ptp(ys):.3g})")
    value = max(float(intercept), 0.0)

    nodes, wts = _sphere_rule(w.dim)
    means = np.array([float(np.dot(wts, w(p + r * nodes))) for r in radii[-tail:]])
    logs = np.array([math.log(r * r) for r in radii[-tail:]])
    slope_value = max(float(np.polyfit(logs, means, 1)[0]), 0.0)
    return LelongEstimate(value, radii, slope_value, masses)


@dataclass
class ThresholdEstimate:
    threshold: float
    bracket: tuple[float, float]
    open: bool = False
    metadata: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        hi = self.bracket[1]
        return {"threshold": self.threshold if math.isfinite(self.threshold) else None,
                "bracket": [self.bracket[0], hi if math.isfinite(hi) else None],
                "open": self.open, "metadata": self.metadata}


def sup_on_domain(w: PshWeight, m: int = 64) -> float:
    """Grid maximum of w over the closed domain ball (singular points give -inf)."""
    nodes, _ = _sphere_rule(w.dim, 32)
    radii = np.linspace(0, w.domain_radius, m)
    best = -np.inf
    with np.errstate(divide="ignore"):
        for r in radii:
            best = max(best, float(np.max(w(r * nodes))))
    return best


def _scaling_exponents(w: PshWeight, c: np.ndarray) -> np.ndarray:
    """Exponents e with w(t^e z) ≈ (const) log t + w(z) near the center c.

    Log poles scale isotropically.  A diagonal algebraic part Σ|z_i^{a_i}|^2 is
    quasi-homogeneous for e_i = 1/a_i, and shells must follow that scaling or a
    fixed angular rule misses the cusp where the smaller power dominates.
    """
    if w.algebraic is None or np.linalg.norm(c) > 1e-14:
        return np.ones(w.dim)
    pure = [next(a[i] for a in w.algebraic.monomials if a[i] > 0 and sum(a) == a[i]) for i in range(w.dim)]
    return 1.0 / np.array(pure, dtype=float)


def _log_shell(w, c, t, expo, alpha, sup_w, log_density, m_rad=8):
    """log ∫ e^{-α(w - sup w)} dV_ref over the image of {1/2 < |ζ| < 1} under ζ -> c + t^e ζ."""
    nodes, wts = _sphere_rule(w.dim)
    x, xw = np.polynomial.legendre.leggauss(m_rad)
    # integrate in log|ζ| on [-log 2, 0]; dV(ζ) = |S_1| ρ^{2n} d(log ρ) dσ and dV(z) = t^{2Σe} dV(ζ)
    a, b = -math.log(2.0), 0.0
    lr, lw = 0.5 * (b - a) * (x + 1) + a, 0.5 * (b - a) * xw
    stretch = t ** expo
    logs = []
    for lk, wk in zip(lr, lw):
        z = c + stretch * (math.exp(lk) * nodes)
        integrand = -alpha * (w(z) - sup_w) + log_density(z)
        logs.append(logsumexp(integrand, b=wts) + math.log(wk) + 2 * w.dim * lk)
    return float(logsumexp(logs)) + 2 * float(np.sum(expo)) * math.log(t) + math.log(_sphere_area(w.dim, 1.0))


def _finite_at(w, alpha, sup_w, log_density, centers, depth=22, refinements=2) -> bool:
    for k, c in enumerate(centers):
        others = [np.linalg.norm(c - o) for j, o in enumerate(centers) if j != k]
        room = min([w.domain_radius - np.linalg.norm(c)] + others)
        if room <= 0:
            raise ValidationError("singular center on the domain boundary")
        r0 = 0.25 * room
        expo = _scaling_exponents(w, c)
        shells = [_log_shell(w, c, r0 * 2.0 ** (-(depth + j)), expo, alpha, sup_w, log_density)
                  for j in range(refinements + 1)]
        ratios = np.diff(shells)
        # the shell contributions must shrink under each successive dyadic refinement
        if np.all(ratios >= 0):
            return False
        if np.any(ratios >= 0):
            raise EstimateUnstableError(f"shell ratios change sign at α={alpha:.4g}")
    return True


def integrability_threshold(w: PshWeight, reference_volume: Callable | None = None,
                            alpha_max: float = DEFAULT_ALPHA_MAX, rel_width: float = 0.02) -> ThresholdEstimate:
    """Largest α with ∫ e^{-α(w - sup w)} dV finite, bracketed by bisection."""
    if reference_volume is None:
        def log_density(z):
            return np.zeros(z.shape[:-1])
        ref_name = "lebesgue"
    else:
        def log_density(z):
            return np.log(reference_volume(z))
        ref_name = getattr(reference_volume, "__name__", "custom")
    sup_w = sup_on_domain(w)
    centers = w.singular_centers()
    meta = {"reference_volume": ref_name, "sup_w": sup_w, "alpha_max": alpha_max,
            "finiteness_test": "geometric decay of dyadic shell integrals near each singular center"}
    if not centers or _finite_at(w, alpha_max, sup_w, log_density, centers):
        return ThresholdEstimate(math.inf, (alpha_max, math.inf), open=True, metadata=meta)
    lo, hi = 0.0, alpha_max
    while hi - lo > 0.5 * rel_width * max(lo, 1e-12) or lo == 0.0:
        mid = 0.5 * (lo + hi)
        if _finite_at(w, mid, sup_w, log_density, centers):
            lo = mid
        else:
            hi = mid
        if hi < 1e-9:
            raise EstimateUnstableError("threshold collapses to 0")
    return ThresholdEstimate(0.5 * (lo + hi), (lo, hi), metadata=meta)


def alpha_over_family(weights: Sequence[PshWeight], reference_volume: Callable | None = None,
                      mode: str = "absolute", fiber_dim: int | None = None,
                      alpha_max: float = DEFAULT_ALPHA_MAX) -> ThresholdEstimate:
    """Minimum integrability threshold over a supplied family of weights.

    This is the α-invariant restricted to the family given, never the supremum
    over all potentials.  In relative mode the reference volume is the
    fibrewise measure supplied by the caller and the criterion α > n/(n+1) is
    evaluated for n = fiber_dim.
    """
    if not weights:
        raise ValidationError("empty weight family")
    if mode not in ("absolute", "relative"):
        raise ValidationError("mode must be 'absolute' or 'relative'")
    estimates = [integrability_threshold(w, reference_volume, alpha_max) for w in weights]
    best = min(estimates, key=lambda e: e.threshold if not e.open else math.inf)
    out = ThresholdEstimate(best.threshold, best.bracket, best.open,
                            dict(best.metadata, family_size=len(weights),
                                 per_weight=[e.threshold if not e.open else None for e in estimates]))
    if mode == "relative":
        if fiber_dim is None:
            raise ValidationError("relative mode needs fiber_dim")
        out.metadata.update(relative_criterion(out.threshold, fiber_dim))
    return out


def relative_criterion(threshold: float, fiber_dim: int) -> dict:
    bound = fiber_dim / (fiber_dim + 1)
    return {"criterion_bound": bound, "criterion_holds": bool(threshold > bound),
            "kappa": fiber_dim, "section_S": "omitted (unit metric)"}

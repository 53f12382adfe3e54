"""One-parameter families of curves: semi-KE metrics, Weil–Petersson form, foliation rank.

Torus families X_s = C/(Z + τ(s)Z) carry the flat unit-area fibre metric
g_zz̄ = 1/(2 Im τ) (coefficient of √-1 dz∧dz̄).  The harmonic Kodaira–Spencer
representative has pointwise norm |τ'|²/(4 (Im τ)²).  The second WP
estimator differentiates the fibre volume V(s) = ∫ √-1 dz∧dz̄ = 2 Im τ on
the base grid: ω_WP = -∂_s∂_s̄ log V.  The literal top power of c₁ of the
relative canonical bundle vanishes for flat fibres (that form is pulled back
from the base), so the volume form of the holomorphic relative 1-form is
used as its potential instead.

The semi-KE form is ω_SKE = √-1∂∂̄ Φ with Φ = (Im z)²/Im τ + log Im τ; its
restriction to each fibre is the flat metric and its horizontal coefficient
c = det(g)/g_zz̄ equals -|A|².  Sphere families have rigid fibres and
delegate the fibre metric to the radial KE solver.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ModelUndefinedError, StencilError, ValidationError
from .ma_engine import ke_residual, ke_solve_radial

CR_STEP = 1e-5
CR_TOL = 1e-8
NULL_TOL = 1e-9


def _complex(v) -> complex:
    if isinstance(v, (list, tuple)):
        return complex(float(v[0]), float(v[1]))
    return complex(v)


@dataclass(frozen=True)
class TauMap:
    """Holomorphic τ(s); `mixed` is isotrivial left of the seam and affine right of it."""

    preset: str
    a: complex = 1j
    b: complex = 0j
    seam: float = 0.0

    def __post_init__(self):
        if self.preset not in ("isotrivial", "affine", "mixed"):
            raise ValidationError(f"unknown parameter map preset {self.preset!r}")

    def piece(self, s0: complex) -> Callable[[complex], complex]:
        a, b = self.a, self.b
        if self.preset == "isotrivial" or (self.preset == "mixed" and s0.real <= self.seam):
            return lambda s: a + 0 * s
        if self.preset == "mixed":
            return lambda s: a + b * (s - self.seam)
        return lambda s: a + b * s

    def __call__(self, s: complex) -> complex:
        return self.piece(s)(s)

    def derivative(self, s: complex) -> complex:
        if self.preset == "isotrivial" or (self.preset == "mixed" and s.real <= self.seam):
            return 0j
        return self.b


@dataclass(frozen=True)
class BaseGrid:
    center: complex
    spacing: float
    size: int

    def __post_init__(self):
        if self.size < 3:
            raise ValidationError("base grid needs at least 3x3 points")
        if not self.spacing > 0:
            raise ValidationError("base grid spacing must be positive")

    def points(self) -> list[complex]:
        half = (self.size - 1) / 2
        return [self.center + self.spacing * complex(i - half, j - half)
                for j in range(self.size) for i in range(self.size)]

    def index(self, s: complex) -> tuple[int, int]:
        half = (self.size - 1) / 2
        d = (complex(s) - self.center) / self.spacing
        i, j = round(d.real + half), round(d.imag + half)
        if abs(d.real + half - i) > 1e-9 or abs(d.imag + half - j) > 1e-9 or not (0 <= i < self.size and 0 <= j < self.size):
            raise ValidationError(f"base point {s} is not on the base grid")
        return i, j

    def interior_points(self) -> list[complex]:
        return [s for s in self.points() if self.is_interior(s)]

    def is_interior(self, s: complex) -> bool:
        i, j = self.index(s)
        return 0 < i < self.size - 1 and 0 < j < self.size - 1


@dataclass(frozen=True)
class FamilyDescriptor:
    kind: str
    base_grid: BaseGrid
    parameter_map: TauMap | None = None
    fiber_resolution: int = 16
    cone: tuple[float, float] = (1.0, 1.0)

    def __post_init__(self):
        if self.kind not in ("torus_family", "isotrivial", "sphere_family"):
            raise ValidationError(f"unknown family kind {self.kind!r}")
        if self.fiber_resolution < 4:
            raise ValidationError("fiber_resolution must be at least 4")
        if self.kind == "sphere_family":
            return
        if self.parameter_map is None:
            raise ValidationError("torus families need a parameter map")
        if self.kind == "isotrivial" and self.parameter_map.preset != "isotrivial":
            raise ValidationError("isotrivial kind needs a constant parameter map")
        for s in self.base_grid.points():
            if self.parameter_map(s).imag <= 0:
                raise ValidationError(f"Im τ must be positive on the base patch (fails at s = {s})")
            if cauchy_riemann_residual(self.parameter_map, s) > CR_TOL:
                raise ValidationError(f"parameter map is not holomorphic at s = {s}")

    @property
    def fiber_dim(self) -> int:
        return 1

    @classmethod
    def from_json(cls, data: dict) -> "FamilyDescriptor":
        try:
            g = data["base_grid"]
            grid = BaseGrid(_complex(g.get("center", [0, 1])), float(g.get("spacing", 0.1)), int(g.get("size", 5)))
            tau = data.get("tau")
            pm = None
            if tau is not None:
                pm = TauMap(tau.get("preset", "affine"), _complex(tau.get("a", [0, 1])),
                            _complex(tau.get("b", [0, 0])), float(tau.get("seam", 0.0)))
            cone = tuple(float(c) for c in data.get("cone", (1.0, 1.0)))
            return cls(data["kind"], grid, pm, int(data.get("fiber_resolution", 16)), cone)
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"malformed family JSON: {exc}") from exc

    def tau_near(self, s0: complex) -> Callable[[complex], complex]:
        return self.parameter_map.piece(complex(s0))


def cauchy_riemann_residual(tau: TauMap, s: complex, h: float = CR_STEP) -> float:
    f = tau.piece(s)
    dx = (f(s + h) - f(s - h)) / (2 * h)
    dy = (f(s + 1j * h) - f(s - 1j * h)) / (2 * h)
    return abs(dx + 1j * dy) / 2  # |∂_s̄ τ|


@dataclass
class SemiKEMetric:
    base_points: list[complex]
    fiber_metrics: list
    fiberwise_constant: list[float]
    residuals: list[float]

    @property
    def max_residual(self) -> float:
        return max(self.residuals)


@dataclass(frozen=True)
class WPSample:
    s: complex
    wp_density: float
    ks_norm: float
    method: str

    def to_json(self) -> dict:
        return {"s": [self.s.real, self.s.imag], "wp_density": self.wp_density, "ks_norm": self.ks_norm,
                "method": self.method}


def _fiber_nodes(tau: complex, res: int) -> np.ndarray:
    j, k = np.meshgrid(np.arange(res), np.arange(res), indexing="ij")
    return ((j + 0.5) + (k + 0.5) * tau) / res


def _flat_fiber(tau: complex, res: int) -> dict:
    """Unit-area flat metric sampled on the fundamental parallelogram."""
    T = tau.imag
    g = np.full((res, res), 1.0 / (2 * T))
    # area = ∫ g √-1 dz∧dz̄ = 2 g · (cell area) summed over cells
    area = float(np.sum(2 * g) * T / res ** 2)
    lg = np.log(g)
    lap = (np.roll(lg, 1, 0) + np.roll(lg, -1, 0) + np.roll(lg, 1, 1) + np.roll(lg, -1, 1) - 4 * lg)
    residual = max(abs(area - 1.0), float(np.max(np.abs(lap))))
    return {"tau": tau, "g": g, "area": area, "residual": residual}


def fiberwise_ke(fam: FamilyDescriptor) -> SemiKEMetric:
    pts = fam.base_grid.points()
    metrics, consts, res = [], [], []
    if fam.kind == "sphere_family":
        try:
            prof = ke_solve_radial(fam.cone)
        except Exception as exc:
            raise type(exc)(f"fiber solve failed at base point {pts[0]}: {exc}") from exc
        r = ke_residual(prof)
        for _ in pts:
            metrics.append(prof)
            consts.append(1.0)
            res.append(r)
        return SemiKEMetric(pts, metrics, consts, res)
    for s in pts:
        fib = _flat_fiber(fam.parameter_map(s), fam.fiber_resolution)
        metrics.append(fib)
        consts.append(0.0)
        res.append(fib["residual"])
    return SemiKEMetric(pts, metrics, consts, res)


def _require_interior(fam: FamilyDescriptor, s: complex):
    if not fam.base_grid.is_interior(s):
        raise StencilError(f"base point {s} needs a full 3x3 stencil on the base grid")


def ks_pointwise_norm(fam: FamilyDescriptor, s: complex) -> float:
    if fam.kind == "sphere_family":
        return 0.0
    tau = fam.parameter_map(s)
    return abs(fam.parameter_map.derivative(s)) ** 2 / (4 * tau.imag ** 2)


def wp_via_ks_norm(fam: FamilyDescriptor, s) -> WPSample:
    s = complex(s)
    _require_interior(fam, s)
    if fam.kind == "sphere_family":
        return WPSample(s, 0.0, 0.0, "ks-norm")
    res = fam.fiber_resolution
    tau = fam.parameter_map(s)
    pointwise = np.full((res, res), ks_pointwise_norm(fam, s))
    weights = np.full((res, res), 1.0 / res ** 2)  # unit-area flat measure
    val = float(np.sum(pointwise * weights))
    return WPSample(s, val, val, "ks-norm")


def fiber_volume(fam: FamilyDescriptor, tau: complex) -> float:
    """∫ √-1 dz∧dz̄ over the fundamental parallelogram by midpoint quadrature."""
    res = fam.fiber_resolution
    cell = tau.imag / res ** 2
    return float(np.sum(np.full((res, res), 2.0 * cell)))


def wp_fiber_integral(fam: FamilyDescriptor, s) -> WPSample:
    s = complex(s)
    _require_interior(fam, s)
    ks = wp_via_ks_norm(fam, s).ks_norm
    if fam.kind == "sphere_family":
        return WPSample(s, 0.0, ks, "fiber-integral")
    h = fam.base_grid.spacing
    f = fam.tau_near(s)
    logv = {d: math.log(fiber_volume(fam, f(s + h * d))) for d in (0, 1, -1, 1j, -1j)}
    lap = (logv[1] + logv[-1] + logv[1j] + logv[-1j] - 4 * logv[0]) / h ** 2
    return WPSample(s, -lap / 4, ks, "fiber-integral")


def wp_field(fam: FamilyDescriptor, method: str = "fiber-integral") -> list[WPSample]:
    fn = wp_fiber_integral if method == "fiber-integral" else wp_via_ks_norm
    return [fn(fam, s) for s in fam.base_grid.interior_points()]


# semi-KE potential and its horizontal coefficient

def ske_potential(tau_fn: Callable[[complex], complex]) -> Callable[[complex, complex], float]:
    def phi(s, z):
        T = tau_fn(s).imag
        return z.imag ** 2 / T + math.log(T)
    return phi


def complex_hessian(F: Callable[[complex, complex], float], s: complex, z: complex, d: float) -> np.ndarray:
    """2x2 matrix of ∂_a∂_b̄ F in the coordinates (s, z), centered second differences."""
    e = {"xs": (d, 0), "ys": (1j * d, 0), "xz": (0, d), "yz": (0, 1j * d)}

    def second(p, q):
        ps, pz = e[p]
        qs, qz = e[q]
        return (F(s + ps + qs, z + pz + qz) - F(s + ps - qs, z + pz - qz)
                - F(s - ps + qs, z - pz + qz) + F(s - ps - qs, z - pz - qz)) / (4 * d * d)

    H = np.empty((2, 2), dtype=complex)
    for a, (xa, ya) in enumerate((("xs", "ys"), ("xz", "yz"))):
        for b, (xb, yb) in enumerate((("xs", "ys"), ("xz", "yz"))):
            H[a, b] = 0.25 * (second(xa, xb) + second(ya, yb) + 1j * (second(xa, yb) - second(ya, xb)))
    return H


def horizontal_coefficient(F, s: complex, z: complex, d: float) -> tuple[float, float]:
    """c = det(g)/g_zz̄ for g the complex Hessian of F, and g_zz̄ itself."""
    H = complex_hessian(F, s, z, d)
    gzz = H[1, 1].real
    return float((np.linalg.det(H).real) / gzz), gzz


@dataclass(frozen=True)
class FoliationEntry:
    s: complex
    rank: int
    horizontal_coefficient: float

    def to_json(self) -> dict:
        return {"s": [self.s.real, self.s.imag], "rank": self.rank, "c": self.horizontal_coefficient}


def foliation_rank(fam: FamilyDescriptor, s) -> FoliationEntry:
    s = complex(s)
    if fam.kind == "sphere_family":
        return FoliationEntry(s, fam.fiber_dim, 0.0)
    F = ske_potential(fam.tau_near(s))
    z = 0.5 * (1 + fam.parameter_map(s))
    c, _ = horizontal_coefficient(F, s, z, 1.0 / fam.fiber_resolution)
    rank = fam.fiber_dim if abs(c) < NULL_TOL else 0
    return FoliationEntry(s, rank, c)


@dataclass
class FoliationReport:
    entries: list[FoliationEntry]
    fiber_dim: int

    @property
    def leaf_indicator(self) -> bool:
        return all(e.rank == self.fiber_dim for e in self.entries)

    def to_json(self) -> dict:
        return {"entries": [e.to_json() for e in self.entries], "leaf_indicator": self.leaf_indicator,
                "fiber_dim": self.fiber_dim}


def foliation_report(fam: FamilyDescriptor) -> FoliationReport:
    return FoliationReport([foliation_rank(fam, s) for s in fam.base_grid.points()], fam.fiber_dim)


@dataclass(frozen=True)
class HorizontalReport:
    s: complex
    residual: float
    absolute: float
    c_mean: float
    ks_norm: float

    def to_json(self) -> dict:
        return {"s": [self.s.real, self.s.imag], "residual": self.residual, "absolute": self.absolute,
                "c_mean": self.c_mean, "ks_norm": self.ks_norm}


def horizontal_c_residual(fam: FamilyDescriptor, s) -> HorizontalReport:
    """sup over fibre nodes of |-Δ c - c - |A|²|, relative to |A|² when it is nonzero.

    c and its fibre Laplacian are both taken by centered differences with
    step 1/fiber_resolution, so the residual is purely discretization error.
    """
    s = complex(s)
    _require_interior(fam, s)
    A2 = ks_pointwise_norm(fam, s)
    if fam.kind == "sphere_family":
        return HorizontalReport(s, 0.0, 0.0, 0.0, 0.0)
    F = ske_potential(fam.tau_near(s))
    d = 1.0 / fam.fiber_resolution
    nodes = _fiber_nodes(fam.parameter_map(s), max(4, fam.fiber_resolution // 4)).ravel()
    worst, cs = 0.0, []
    for z in nodes:
        c0, gzz = horizontal_coefficient(F, s, z, d)
        nb = [horizontal_coefficient(F, s, z + w, d)[0] for w in (d, -d, 1j * d, -1j * d)]
        lap = (sum(nb) - 4 * c0) / (4 * d * d) / gzz
        worst = max(worst, abs(-lap - c0 - A2))
        cs.append(c0)
    rel = worst / A2 if A2 > 1e-12 else worst
    return HorizontalReport(s, float(rel), float(worst), float(np.mean(cs)), float(A2))


# relative Kähler–Einstein residual

def semi_flat_total_metric(tau: TauMap, base_metric: Callable[[complex], float]):
    """ω_X = π*ω_B + √-1∂∂̄((Im z)²/Im τ), closed form; a sampler (s, z) -> 2x2."""
    def sample(s, z):
        t = tau(s)
        T = t.imag
        if T <= 0:
            raise ModelUndefinedError(f"Im τ ≤ 0 at s = {s}")
        dt = tau.derivative(s)
        y = z.imag
        gzz = 1.0 / (2 * T)
        gzs = -y * np.conj(dt) / (2 * T ** 2)
        gss = y * y * abs(dt) ** 2 / (2 * T ** 3) + base_metric(s)
        return np.array([[gss, np.conj(gzs)], [gzs, gzz]], dtype=complex)
    return sample


def hyperbolic_base(tau: TauMap, scale: float = 1.0):
    """g_B = scale/(Im τ)² on the base; scale 1/2 with τ = s is the curvature -1 metric."""
    def g(s):
        T = tau(s).imag
        if T <= 0:
            raise ModelUndefinedError(f"Im τ ≤ 0 at s = {s}")
        return scale / T ** 2
    return g


def _ricci_fd(total_metric, s: complex, z: complex, h: float) -> np.ndarray:
    """-∂∂̄ log det g by fourth-order centered differences in the four real directions."""
    def logdet(ss, zz):
        return math.log(np.linalg.det(total_metric(ss, zz)).real)

    e = {"xs": (1, 0), "ys": (1j, 0), "xz": (0, 1), "yz": (0, 1j)}
    c = [(-2, -1 / 12), (-1, 2 / 3), (1, -2 / 3), (2, 1 / 12)]  # first-derivative weights

    def second(p, q):
        ps, pz = e[p]
        qs, qz = e[q]
        acc = 0.0
        for i, wi in c:
            for j, wj in c:
                acc += wi * wj * logdet(s + h * (i * ps + j * qs), z + h * (i * pz + j * qz))
        return acc / (h * h)

    def pure(p):
        ps, pz = e[p]
        w = [(-2, -1 / 12), (-1, 4 / 3), (0, -5 / 2), (1, 4 / 3), (2, -1 / 12)]
        return sum(wk * logdet(s + h * k * ps, z + h * k * pz) for k, wk in w) / (h * h)

    R = np.empty((2, 2), dtype=complex)
    for a, (xa, ya) in enumerate((("xs", "ys"), ("xz", "yz"))):
        for b, (xb, yb) in enumerate((("xs", "ys"), ("xz", "yz"))):
            if a == b:
                re = pure(xa) + pure(ya)
                im = 0.0
            else:
                re = second(xa, xb) + second(ya, yb)
                im = second(xa, yb) - second(ya, xb)
            R[a, b] = -0.25 * (re + 1j * im)
    return R


@dataclass(frozen=True)
class Patch:
    s_points: tuple[complex, ...]
    z_points: tuple[complex, ...]
    h: float = 0.02
    singular_points: tuple[complex, ...] = ()


def relative_ke_residual(total_metric, base_metric, wp: Callable[[complex], float] | dict, patch: Patch,
                         regime: str = "general", pole_terms=None) -> dict:
    """sup over the patch of |Ric(ω_X) - (∓ω_B + ω_WP + poles)| (entrywise, coefficients of √-1 dz∧dz̄).

    regime "general" uses -ω_B, "fano" uses +ω_B.  `wp` maps a base point to
    the WP density (a dict keyed by base point is accepted).
    """
    if regime not in ("general", "fano"):
        raise ValidationError("regime must be 'general' or 'fano'")
    sign = -1.0 if regime == "general" else 1.0
    reach = 2 * patch.h
    for p in patch.singular_points:
        for s in patch.s_points:
            if abs(s - p) <= reach:
                raise ValidationError(f"patch point {s} touches declared singular locus {p}")
    wp_fn = (lambda s: wp[s]) if isinstance(wp, dict) else wp
    worst = 0.0
    try:
        for s in patch.s_points:
            target_ss = sign * base_metric(s) + wp_fn(s)
            for z in patch.z_points:
                R = _ricci_fd(total_metric, s, z, patch.h)
                T = np.zeros((2, 2), dtype=complex)
                T[0, 0] = target_ss
                if pole_terms is not None:
                    T = T + np.asarray(pole_terms(s, z), dtype=complex)
                worst = max(worst, float(np.max(np.abs(R - T))))
    except ModelUndefinedError as exc:
        raise ValidationError(f"patch touches a singular locus: {exc}") from exc
    scale = max(abs(base_metric(s)) for s in patch.s_points)
    return {"residual": worst, "relative": worst / scale, "regime": regime,
            "flagged": worst / scale > 0.1}


def torus_patch(fam: FamilyDescriptor, h: float | None = None, nz: int = 3) -> Patch:
    """Interior base points of fam with a few fibre points over each."""
    tau0 = fam.parameter_map(fam.base_grid.center)
    zs = tuple(complex((k + 0.5) / nz, 0.0) + 0.5 * tau0 for k in range(nz))
    return Patch(tuple(fam.base_grid.interior_points()), zs, h or fam.base_grid.spacing / 5)


def torus_relative_ke_residual(fam: FamilyDescriptor, regime: str = "general", h: float | None = None) -> dict:
    """Relative-KE residual for a torus family with ω_B = √-1 ds∧ds̄/(Im τ)², WP from the fibre integral."""
    tau = fam.parameter_map
    base = hyperbolic_base(tau, 1.0)
    total = semi_flat_total_metric(tau, base)
    patch = torus_patch(fam, h)
    wp = {s: wp_fiber_integral(fam, s).wp_density for s in patch.s_points}
    return relative_ke_residual(total, base, wp, patch, regime)


def product_relative_ke_residual(center: complex = 1.5j, spacing: float = 0.1, size: int = 5,
                                 tau0: complex = 1j, h: float = 0.02) -> dict:
    """Flat torus times the curvature -1 upper half-plane; Ric splits and WP vanishes."""
    grid = BaseGrid(center, spacing, size)
    tau = TauMap("affine", 0j, 1 + 0j)  # τ = s, used only for the base metric
    base = hyperbolic_base(tau, 0.5)
    fib = 1.0 / (2 * tau0.imag)

    def total(s, z):
        return np.array([[base(s), 0], [0, fib]], dtype=complex)

    zs = tuple(complex(k / 3, 0.3) for k in range(3))
    patch = Patch(tuple(grid.interior_points()), zs, h)
    return relative_ke_residual(total, base, lambda s: 0.0, patch, "general")

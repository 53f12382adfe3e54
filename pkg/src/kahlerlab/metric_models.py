"""Closed-form model singular metrics and empirical quasi-isometry constants.

Matrices are the coefficients h_{jk} of a (1,1)-form written as
Σ h_{jk} √-1 dz_j ∧ dz̄_k; the 1/π factors of the fibrewise models are kept.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.linalg import eigh

from .errors import ModelUndefinedError, ValidationError


@dataclass(frozen=True)
class MetricSample:
    point: tuple[complex, ...]
    matrix: np.ndarray

    def is_positive(self) -> bool:
        """Leading principal minors all positive."""
        m = self.matrix
        return all(np.real(np.linalg.det(m[:k, :k])) > 0 for k in range(1, m.shape[0] + 1))

    def csv_row(self) -> list[float]:
        row = []
        for z in self.point:
            row += [z.real, z.imag]
        for entry in self.matrix.ravel():
            row += [entry.real, entry.imag]
        return row


@dataclass(frozen=True)
class ConicalModelMetric:
    beta: float
    n: int = 1

    def __post_init__(self):
        if not 0 < self.beta < 1:
            raise ValidationError("cone angle parameter must lie in (0, 1)")
        if self.n < 1:
            raise ValidationError("dimension must be positive")

    def sample(self, point) -> MetricSample:
        return eval_conical_model(self, point)


@dataclass(frozen=True)
class FibrewiseModelMetric:
    kind: str
    n: int = 1
    t: complex = 0.5

    def __post_init__(self):
        if self.kind not in ("poincare", "conical"):
            raise ValidationError("kind must be 'poincare' or 'conical'")
        if not 0 < abs(self.t) < 1:
            raise ValidationError("base parameter needs 0 < |t| < 1")

    def sample(self, point) -> MetricSample:
        return eval_fibrewise_model(self, point, self.t)


def eval_conical_model(m: ConicalModelMetric, point) -> MetricSample:
    z = tuple(complex(x) for x in np.atleast_1d(point))
    if len(z) != m.n:
        raise ValidationError(f"point must have {m.n} coordinates")
    if z[0] == 0:
        raise ModelUndefinedError("z_1 = 0 lies on the cone divisor")
    diag = np.ones(m.n, dtype=complex)
    diag[0] = abs(z[0]) ** (-2 * (1 - m.beta))
    return MetricSample(z, np.diag(diag))


def fibrewise_log_term(z: Sequence[complex], t: complex) -> float:
    return math.log(abs(t) ** 2) - sum(math.log(abs(zk) ** 2) for zk in z)


def eval_fibrewise_model(m: FibrewiseModelMetric, z, t: complex | None = None) -> MetricSample:
    t = m.t if t is None else t
    z = tuple(complex(x) for x in np.atleast_1d(z))
    if len(z) != m.n:
        raise ValidationError(f"point must have {m.n} coordinates")
    if any(zk == 0 for zk in z):
        raise ModelUndefinedError("model undefined where some z_k = 0")
    if not 0 < abs(t) < 1:
        raise ModelUndefinedError("base parameter needs 0 < |t| < 1")
    if m.kind == "poincare" and any(abs(zk) >= 1 for zk in z):
        raise ModelUndefinedError("Poincaré model needs 0 < |z_k| < 1")
    L = fibrewise_log_term(z, t)
    if L == 0:
        raise ModelUndefinedError("log|t|^2 - Σ log|z_k|^2 vanishes")
    zs = np.array(z)
    if m.kind == "poincare":
        diag = 1.0 / (math.pi * np.abs(zs) ** 2 * np.log(np.abs(zs) ** 2) ** 2)
    else:
        diag = 1.0 / (math.pi * np.abs(zs) ** 2)
    inv = 1.0 / zs
    correction = np.outer(inv, np.conj(inv)) / (math.pi * L ** 2)
    return MetricSample(z, np.diag(diag).astype(complex) + correction)


def correction_coefficient(z: Sequence[complex], t: complex) -> float:
    """(1/π) L^{-2}, the scalar in front of the rank-one term."""
    return 1.0 / (math.pi * fibrewise_log_term(z, t) ** 2)


def football_metric(beta: float) -> Callable[[Sequence[complex]], MetricSample]:
    """Constant-curvature metric on the sphere with cone angle 2πβ at 0 and ∞.

    Coefficient of √-1 dz∧dz̄ is 2β²|z|^{2β-2}/(1+|z|^{2β})², the curvature-one
    football written in the same normalization as the radial solvers.
    """
    def sample(point):
        z = complex(np.atleast_1d(point)[0])
        if z == 0:
            raise ModelUndefinedError("cone point")
        r2b = abs(z) ** (2 * beta)
        h = 2 * beta ** 2 * abs(z) ** (2 * beta - 2) / (1 + r2b) ** 2
        return MetricSample((z,), np.array([[h]], dtype=complex))
    return sample


def log_spaced_points(r_min: float, r_max: float, n_rad: int, n_ang: int, dim: int = 1) -> list[tuple[complex, ...]]:
    """Deterministic grid: log-spaced moduli in every coordinate, evenly spread angles."""
    radii = np.geomspace(r_min, r_max, n_rad)
    angles = 2 * np.pi * (np.arange(n_ang) + 0.5) / n_ang
    coords = [r * np.exp(1j * a) for r in radii for a in angles]
    if dim == 1:
        return [(c,) for c in coords]
    out = []
    for i, c1 in enumerate(coords):
        c2 = coords[(7 * i + 3) % len(coords)]
        out.append((c1,) + (c2,) * (dim - 1))
    return out


def _extremes(model_sampler, candidate_sampler, points) -> tuple[float, float]:
    lo, hi = math.inf, -math.inf
    for p in points:
        a = np.asarray(candidate_sampler(p).matrix, dtype=complex)
        b = np.asarray(model_sampler(p).matrix, dtype=complex)
        if np.min(np.linalg.eigvalsh(a)) <= 0:
            raise ValidationError(f"candidate metric is not positive at {p}")
        ev = eigh(a, b, eigvals_only=True)
        lo, hi = min(lo, float(ev[0])), max(hi, float(ev[-1]))
    return lo, hi


def quasi_isometry_constants(model_sampler, candidate_sampler, region: dict,
                             rel_tol: float = 0.01, max_doublings: int = 6) -> tuple[float, float]:
    """Extremal generalized eigenvalues of candidate against model over a region.

    region = {"r_min", "r_max", "dim"}; the sample grid doubles until both
    constants move by less than rel_tol.
    """
    r_min, r_max = float(region["r_min"]), float(region["r_max"])
    if not 0 < r_min < r_max:
        raise ValidationError("region needs 0 < r_min < r_max")
    dim = int(region.get("dim", 1))
    n_rad, n_ang = int(region.get("n_rad", 8)), int(region.get("n_ang", 4))
    prev = _extremes(model_sampler, candidate_sampler, log_spaced_points(r_min, r_max, n_rad, n_ang, dim))
    for _ in range(max_doublings):
        n_rad, n_ang = 2 * n_rad, 2 * n_ang
        cur = _extremes(model_sampler, candidate_sampler, log_spaced_points(r_min, r_max, n_rad, n_ang, dim))
        if all(abs(c - p) <= rel_tol * abs(p) for c, p in zip(cur, prev)):
            return cur
        prev = cur
    return prev


def sample_grid(sampler, points: Iterable) -> list[MetricSample]:
    return [sampler(p) for p in points]

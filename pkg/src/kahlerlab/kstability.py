"""Donaldson–Futaki invariants of toric test configurations, and CM numerics.

A toric test configuration is a polytope P together with a rational concave
piecewise-linear weight f = min_j (<g_j, x> + c_j).  The k-th graded piece of
the central fibre has a basis indexed by kP ∩ Z^n, and the generator of the
C*-action acts on the basis vector for x with weight k f(x/k).  Everything is
computed from exact lattice sums, so the sign of the invariant is exact.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from . import polytope as pc
from .errors import FitError, ValidationError
from .polytope import LatticePolytope
from .rational import parse, to_str, vector_to_str


@dataclass(frozen=True)
class AffinePiece:
    gradient: tuple[Fraction, ...]
    offset: Fraction

    def __call__(self, x) -> Fraction:
        return sum((g * xi for g, xi in zip(self.gradient, x)), Fraction(0)) + self.offset


@dataclass(frozen=True)
class ToricTestConfiguration:
    base_polytope: LatticePolytope
    pieces: tuple[AffinePiece, ...]

    def __post_init__(self):
        if not self.pieces:
            raise ValidationError("weight needs at least one affine piece")
        n = self.base_polytope.dim
        for piece in self.pieces:
            if len(piece.gradient) != n:
                raise ValidationError(f"weight gradient has length {len(piece.gradient)}, polytope dimension is {n}")

    @classmethod
    def affine(cls, P: LatticePolytope, gradient: Sequence, offset=0) -> "ToricTestConfiguration":
        return cls(P, (AffinePiece(tuple(Fraction(g) for g in gradient), Fraction(offset)),))

    @classmethod
    def from_json(cls, data: dict) -> "ToricTestConfiguration":
        try:
            P = LatticePolytope.from_json(data["polytope"])
            raw = data["weight"]["affine_pieces"]
            pieces = tuple(AffinePiece(tuple(parse(g) for g in p["gradient"]), parse(p.get("offset", 0)))
                           for p in raw)
        except (KeyError, TypeError, ValueError, ZeroDivisionError) as exc:
            if isinstance(exc, ValidationError):
                raise
            raise ValidationError(f"malformed test-configuration JSON: {exc}") from exc
        return cls(P, pieces)

    def to_json(self) -> dict:
        return {"polytope": self.base_polytope.to_json(),
                "weight": {"affine_pieces": [{"gradient": vector_to_str(p.gradient), "offset": to_str(p.offset)}
                                             for p in self.pieces]}}

    @property
    def is_product(self) -> bool:
        """A single affine piece is a one-parameter-subgroup (product) configuration."""
        return len(self.pieces) == 1

    def weight(self, x) -> Fraction:
        return min(p(x) for p in self.pieces)


@dataclass(frozen=True)
class HilbertCoefficients:
    a0: Fraction
    a1: Fraction


@dataclass(frozen=True)
class WeightCoefficients:
    b0: Fraction
    b1: Fraction


@dataclass(frozen=True)
class DFReport:
    futaki: Fraction
    verdict: str

    def to_json(self) -> dict:
        return {"futaki": to_str(self.futaki), "verdict": self.verdict,
                "scope": "sign along the supplied configuration only"}


def hilbert_coefficients(P: LatticePolytope) -> HilbertCoefficients:
    poly = pc.ehrhart_fit(P, range(1, P.dim + 2))
    return HilbertCoefficients(poly.coefficients[0], poly.coefficients[1])


def weight_trace(tc: ToricTestConfiguration, k: int) -> Fraction:
    """Σ_{x ∈ kP ∩ Z^n} k f(x/k)."""
    if k < 1:
        raise ValidationError("k must be a positive integer")
    total = Fraction(0)
    for x in pc.lattice_points(tc.base_polytope, k):
        xs = [Fraction(int(v), k) for v in x]
        total += k * tc.weight(xs)
    return total


def weight_coefficients(tc: ToricTestConfiguration) -> WeightCoefficients:
    """Leading coefficients of Tr(A_k) from an exact degree-(n+1) fit.

    The fit uses k = 1..n+2 and holds out k = n+3; a mismatch means the trace
    is only quasi-polynomial (breaks at non-lattice loci) and raises FitError.
    """
    n = tc.base_polytope.dim
    samples = [(k, weight_trace(tc, k)) for k in range(1, n + 4)]
    poly = pc.fit_polynomial(samples, n + 1)
    return WeightCoefficients(poly.coefficients[0], poly.coefficients[1])


def futaki_from_coefficients(h: HilbertCoefficients, w: WeightCoefficients) -> Fraction:
    if h.a0 <= 0:
        raise FitError("leading Hilbert coefficient must be positive")
    return 2 * (h.a1 * w.b0 - h.a0 * w.b1) / h.a0


def _verdict(fut: Fraction) -> str:
    if fut == 0:
        return "zero"
    return "stable-direction" if fut > 0 else "unstable-direction"


def donaldson_futaki(tc: ToricTestConfiguration) -> DFReport:
    h = hilbert_coefficients(tc.base_polytope)
    w = weight_coefficients(tc)
    fut = futaki_from_coefficients(h, w)
    return DFReport(fut, _verdict(fut))


def futaki_integral_oracle(P: LatticePolytope, gradient: Sequence, offset=0) -> Fraction:
    """Same invariant for an affine weight from integrals instead of lattice sums.

    For affine f, b0 = ∫_P f, b1 = ½ ∫_∂P f (lattice boundary measure),
    a0 = vol P and a1 = ½ |∂P|.
    """
    a0 = pc.volume(P)
    a1 = pc.boundary_measure(P) / 2
    b0 = pc.integrate_affine(P, gradient, offset)
    b1 = pc.boundary_integral_affine(P, gradient, offset) / 2
    return futaki_from_coefficients(HilbertCoefficients(a0, a1), WeightCoefficients(b0, b1))


def eta_constant(P: LatticePolytope) -> Fraction:
    """n (-K).L^(n-1) / L^n for the polarization given by P."""
    deg = pc.toric_degrees(P)
    if deg["L_degree"] == 0:
        raise ValidationError("L_degree vanishes")
    return P.dim * deg["anticanonical_degree"] / deg["L_degree"]


def cm_degree(relcanonical_term, polarization_term, n: int, eta) -> Fraction:
    """2^(n+1) ((n+1) π_*[K_{X/B}.L^n] + η π_*[L^(n+1)])."""
    if n < 1:
        raise ValidationError("fibre dimension must be positive")
    rel, pol, eta = Fraction(relcanonical_term), Fraction(polarization_term), Fraction(eta)
    return 2 ** (n + 1) * ((n + 1) * rel + eta * pol)


def product_family_terms(fiber: LatticePolytope) -> dict:
    """Pushforward numbers for the trivial P^1-family over P^1, from mixed volumes.

    The total space is P^1 x P^1 (fibre = second factor).  K_{X/B} and L are
    pulled back from the fibre, so their polytopes are segments in the fibre
    direction; the pushforward to the base of a class of degree 2 is the
    intersection number on the surface.
    """
    if fiber.dim != 1:
        raise ValidationError("product_family_terms handles curve fibres only")
    lo, hi = fiber.vertices[0][0], fiber.vertices[1][0]
    L = [(0, lo), (0, hi)]
    anticanonical = [(0, -1), (0, 1)]
    rel = -pc.mixed_volume_2d(anticanonical, L)
    pol = pc.mixed_volume_2d(L, L)
    return {"relcanonical_term": rel, "polarization_term": pol, "n": 1, "eta": eta_constant(fiber)}

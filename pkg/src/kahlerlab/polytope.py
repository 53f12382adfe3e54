"""Exact lattice polytopes in dimension at most three.

Everything here is integer or ``Fraction`` arithmetic; no floats are used, so
signs of derived invariants are trustworthy.  Polytopes are given by their
vertices and the facet inequalities <a, x> >= -c are derived by an exact
convex hull.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .errors import DegeneratePolytopeError, FitError, UnsupportedDimensionError, ValidationError
from .rational import solve_exact, to_str

MAX_DIM = 3

Point = tuple[int, ...]
Facet = tuple[Point, int]


def _sub(p, q):
    return tuple(a - b for a, b in zip(p, q))


def _dot(p, q):
    return sum(a * b for a, b in zip(p, q))


def _cross(u, v):
    return (u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2], u[0] * v[1] - u[1] * v[0])


def _primitive(v):
    g = 0
    for x in v:
        g = math.gcd(g, abs(x))
    return tuple(x // g for x in v) if g else tuple(v)


def _rank(vectors) -> int:
    """Exact rank of a list of integer vectors."""
    rows = [[Fraction(x) for x in v] for v in vectors]
    if not rows:
        return 0
    rank, ncol = 0, len(rows[0])
    for col in range(ncol):
        pivot = next((r for r in range(rank, len(rows)) if rows[r][col] != 0), None)
        if pivot is None:
            continue
        rows[rank], rows[pivot] = rows[pivot], rows[rank]
        for r in range(len(rows)):
            if r != rank and rows[r][col] != 0:
                f = rows[r][col] / rows[rank][col]
                rows[r] = [a - f * b for a, b in zip(rows[r], rows[rank])]
        rank += 1
    return rank


def _det(m) -> Fraction:
    m = [[Fraction(x) for x in row] for row in m]
    n, det = len(m), Fraction(1)
    for col in range(n):
        pivot = next((r for r in range(col, n) if m[r][col] != 0), None)
        if pivot is None:
            return Fraction(0)
        if pivot != col:
            m[col], m[pivot] = m[pivot], m[col]
            det = -det
        det *= m[col][col]
        for r in range(col + 1, n):
            f = m[r][col] / m[col][col]
            m[r] = [a - f * b for a, b in zip(m[r], m[col])]
    return det


def convex_hull_2d(points: Iterable[Sequence[int]]) -> list[Point]:
    """Counter-clockwise hull of integer points, collinear points dropped."""
    pts = sorted(set(tuple(p) for p in points))
    if len(pts) <= 2:
        return pts

    def turn(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower: list[Point] = []
    for p in pts:
        while len(lower) >= 2 and turn(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: list[Point] = []
    for p in reversed(pts):
        while len(upper) >= 2 and turn(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return lower[:-1] + upper[:-1]


def polygon_area(points: Iterable[Sequence[int]]) -> Fraction:
    """Area of the convex hull of a planar point set; 0 for degenerate sets."""
    hull = convex_hull_2d(points)
    if len(hull) < 3:
        return Fraction(0)
    twice = sum(hull[i][0] * hull[(i + 1) % len(hull)][1] - hull[(i + 1) % len(hull)][0] * hull[i][1]
                for i in range(len(hull)))
    return Fraction(abs(twice), 2)


def mixed_volume_2d(p: Iterable[Sequence[int]], q: Iterable[Sequence[int]]) -> Fraction:
    """Intersection number D_P . D_Q of two nef toric divisors on a surface.

    Uses MV(P, Q) = area(P + Q) - area(P) - area(Q); the point sets may be
    lower dimensional (pulled-back classes give segments or points).
    """
    p, q = [tuple(x) for x in p], [tuple(x) for x in q]
    minkowski = {(a[0] + b[0], a[1] + b[1]) for a in p for b in q}
    return polygon_area(minkowski) - polygon_area(p) - polygon_area(q)


def _hull_3d(points: list[Point]) -> tuple[list[Point], list[Facet]]:
    facets: dict[Point, int] = {}
    for p, q, r in itertools.combinations(points, 3):
        normal = _cross(_sub(q, p), _sub(r, p))
        if not any(normal):
            continue
        normal = _primitive(normal)
        level = _dot(normal, p)
        values = [_dot(normal, x) - level for x in points]
        if all(v >= 0 for v in values):
            facets[normal] = -level
        elif all(v <= 0 for v in values):
            facets[tuple(-x for x in normal)] = level
    facet_list = sorted(facets.items())
    vertices = []
    for x in points:
        tight = [a for a, c in facet_list if _dot(a, x) == -c]
        if _rank(tight) == 3:
            vertices.append(x)
    return vertices, facet_list


@dataclass(frozen=True)
class LatticePolytope:
    """Full-dimensional lattice polytope with facets <a_i, x> >= -c_i."""

    vertices: tuple[Point, ...]
    facets: tuple[Facet, ...]

    @classmethod
    def from_vertices(cls, points: Iterable[Sequence[int]]) -> "LatticePolytope":
        pts = []
        for p in points:
            if any(isinstance(x, bool) or int(x) != x for x in p):
                raise ValidationError(f"non-integral vertex {p!r}")
            pts.append(tuple(int(x) for x in p))
        if not pts:
            raise DegeneratePolytopeError("no vertices supplied")
        n = len(pts[0])
        if any(len(p) != n for p in pts):
            raise ValidationError("vertices have mixed dimensions")
        if n > MAX_DIM or n < 1:
            raise UnsupportedDimensionError(f"dimension {n} not in 1..{MAX_DIM}")
        pts = sorted(set(pts))
        if _rank([_sub(p, pts[0]) for p in pts[1:]]) < n:
            raise DegeneratePolytopeError(f"polytope is not full-dimensional in Z^{n}")
        if n == 1:
            lo, hi = min(pts), max(pts)
            return cls((lo, hi), (((1,), -lo[0]), ((-1,), hi[0])))
        if n == 2:
            hull = convex_hull_2d(pts)
            facets = []
            for i, p in enumerate(hull):
                q = hull[(i + 1) % len(hull)]
                a = _primitive((p[1] - q[1], q[0] - p[0]))
                facets.append((a, -_dot(a, p)))
            return cls(tuple(hull), tuple(facets))
        vertices, facets = _hull_3d(pts)
        return cls(tuple(vertices), tuple(facets))

    @classmethod
    def from_json(cls, data: dict) -> "LatticePolytope":
        """{"vertices": [[...], ...]} or {"stock": name}, optionally with "dilation": k."""
        if isinstance(data, dict) and "stock" in data:
            P = stock(data["stock"])
        elif isinstance(data, dict) and "vertices" in data:
            P = cls.from_vertices(data["vertices"])
        else:
            raise ValidationError("polytope JSON needs a 'vertices' list or a 'stock' name")
        k = data.get("dilation", 1)
        if not isinstance(k, int) or isinstance(k, bool) or k < 1:
            raise ValidationError("dilation must be a positive integer")
        return P.dilate(k) if k != 1 else P

    def to_json(self) -> dict:
        return {"vertices": [list(v) for v in self.vertices]}

    @property
    def dim(self) -> int:
        return len(self.vertices[0])

    def contains(self, x: Sequence, k=1) -> bool:
        return all(_dot(a, x) >= -k * c for a, c in self.facets)

    def facet_vertices(self, facet: Facet) -> list[Point]:
        a, c = facet
        return [v for v in self.vertices if _dot(a, v) == -c]

    def dilate(self, k: int) -> "LatticePolytope":
        return LatticePolytope.from_vertices([tuple(k * x for x in v) for v in self.vertices])

    def transform(self, matrix: Sequence[Sequence[int]], shift: Sequence[int] | None = None) -> "LatticePolytope":
        """Image under x -> M x + v; M should be unimodular for invariance checks."""
        shift = shift or (0,) * self.dim
        return LatticePolytope.from_vertices(
            [tuple(_dot(row, v) + s for row, s in zip(matrix, shift)) for v in self.vertices])

    def simplices(self) -> list[tuple[Point, ...]]:
        """Triangulation into n-simplices (coning from the first vertex)."""
        n = self.dim
        if n == 1:
            return [tuple(self.vertices)]
        apex = self.vertices[0]
        if n == 2:
            v = self.vertices
            return [(v[0], v[i], v[i + 1]) for i in range(1, len(v) - 1)]
        out = []
        for tri in self.boundary_triangles():
            if apex not in tri:
                out.append((apex,) + tri)
        return out

    def boundary_triangles(self) -> list[tuple[Point, Point, Point]]:
        """Fan triangulation of each facet of a 3-polytope."""
        out = []
        for facet in self.facets:
            a, _ = facet
            pts = self.facet_vertices(facet)
            drop = max(range(3), key=lambda i: abs(a[i]))
            keep = [i for i in range(3) if i != drop]
            proj = {(p[keep[0]], p[keep[1]]): p for p in pts}
            ordered = [proj[q] for q in convex_hull_2d(proj)]
            out.extend((ordered[0], ordered[i], ordered[i + 1]) for i in range(1, len(ordered) - 1))
        return out

    def boundary_pieces(self) -> list[tuple[tuple[Point, ...], Fraction]]:
        """Boundary simplices paired with their lattice-normalized measure."""
        n = self.dim
        if n == 1:
            return [((v,), Fraction(1)) for v in self.vertices]
        if n == 2:
            v = self.vertices
            out = []
            for i, p in enumerate(v):
                q = v[(i + 1) % len(v)]
                out.append(((p, q), Fraction(math.gcd(abs(q[0] - p[0]), abs(q[1] - p[1])))))
            return out
        out = []
        for tri in self.boundary_triangles():
            cr = _cross(_sub(tri[1], tri[0]), _sub(tri[2], tri[0]))
            g = 0
            for x in cr:
                g = math.gcd(g, abs(x))
            out.append((tri, Fraction(g, 2)))
        return out


def lattice_point_count(P: LatticePolytope, k: int = 1) -> int:
    """Number of points of kP ∩ Z^n, by scanning the bounding box of kP."""
    if P.dim > MAX_DIM:
        raise UnsupportedDimensionError(f"dimension {P.dim} > {MAX_DIM}")
    if k < 1:
        raise ValidationError("k must be a positive integer")
    return len(lattice_points(P, k))


def lattice_points(P: LatticePolytope, k: int = 1) -> np.ndarray:
    n = P.dim
    lo = [k * min(v[i] for v in P.vertices) for i in range(n)]
    hi = [k * max(v[i] for v in P.vertices) for i in range(n)]
    axes = [np.arange(a, b + 1, dtype=np.int64) for a, b in zip(lo, hi)]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n)
    normals = np.array([a for a, _ in P.facets], dtype=np.int64)
    offsets = np.array([c for _, c in P.facets], dtype=np.int64)
    inside = np.all(grid @ normals.T >= -k * offsets, axis=1)
    return grid[inside]


@dataclass(frozen=True)
class EhrhartPolynomial:
    """coefficients[i] multiplies k**(degree - i)."""

    coefficients: tuple[Fraction, ...]

    @property
    def degree(self) -> int:
        return len(self.coefficients) - 1

    def __call__(self, k) -> Fraction:
        acc = Fraction(0)
        for c in self.coefficients:
            acc = acc * k + c
        return acc

    def to_json(self) -> dict:
        return {"coefficients": [to_str(c) for c in self.coefficients],
                "convention": "coefficients[i] multiplies k^(degree-i)"}


def fit_polynomial(samples: Sequence[tuple[int, Fraction]], degree: int) -> EhrhartPolynomial:
    """Exact interpolation through the first degree+1 samples; the rest must agree."""
    if len({k for k, _ in samples}) < degree + 1:
        raise FitError(f"need {degree + 1} distinct sample points, got {len(samples)}")
    head = samples[:degree + 1]
    matrix = [[Fraction(k) ** (degree - j) for j in range(degree + 1)] for k, _ in head]
    coeffs = solve_exact(matrix, [Fraction(v) for _, v in head])
    poly = EhrhartPolynomial(tuple(coeffs))
    for k, v in samples[degree + 1:]:
        if poly(k) != v:
            raise FitError(f"no degree-{degree} polynomial fits: value at k={k} is {v}, fit gives {poly(k)}")
    return poly


def ehrhart_fit(P: LatticePolytope, k_range: Iterable[int] | None = None) -> EhrhartPolynomial:
    """Exact Ehrhart polynomial from lattice counts, with one held-out check."""
    n = P.dim
    ks = sorted(set(k_range)) if k_range is not None else list(range(1, n + 2))
    if len(ks) < n + 1:
        raise FitError(f"need at least {n + 1} distinct k values, got {len(ks)}")
    held_out = max(ks) + 1
    samples = [(k, Fraction(lattice_point_count(P, k))) for k in ks + [held_out]]
    return fit_polynomial(samples, n)


def volume(P: LatticePolytope) -> Fraction:
    n = P.dim
    total = Fraction(0)
    for simplex in P.simplices():
        edges = [_sub(v, simplex[0]) for v in simplex[1:]]
        total += abs(_det(edges)) / math.factorial(n)
    return total


def barycenter(P: LatticePolytope) -> tuple[Fraction, ...]:
    """Exact centroid of the solid polytope."""
    n = P.dim
    vol = Fraction(0)
    moment = [Fraction(0)] * n
    for simplex in P.simplices():
        edges = [_sub(v, simplex[0]) for v in simplex[1:]]
        w = abs(_det(edges)) / math.factorial(n)
        vol += w
        for i in range(n):
            moment[i] += w * Fraction(sum(v[i] for v in simplex), n + 1)
    if vol == 0:
        raise DegeneratePolytopeError("polytope has zero volume")
    return tuple(m / vol for m in moment)


def boundary_measure(P: LatticePolytope) -> Fraction:
    """Lattice-normalized (n-1)-volume of the boundary."""
    return sum((m for _, m in P.boundary_pieces()), Fraction(0))


def integrate_affine(P: LatticePolytope, gradient: Sequence, offset=0) -> Fraction:
    """∫_P (<g, x> + offset) dx, exact."""
    c = barycenter(P)
    return volume(P) * (sum(Fraction(g) * x for g, x in zip(gradient, c)) + Fraction(offset))


def boundary_integral_affine(P: LatticePolytope, gradient: Sequence, offset=0) -> Fraction:
    """∫_∂P (<g, x> + offset) dσ with the lattice-normalized boundary measure."""
    total = Fraction(0)
    for pts, mass in P.boundary_pieces():
        centroid = [Fraction(sum(p[i] for p in pts), len(pts)) for i in range(P.dim)]
        total += mass * (sum(Fraction(g) * x for g, x in zip(gradient, centroid)) + Fraction(offset))
    return total


def toric_degrees(P: LatticePolytope) -> dict:
    """Top self-intersection of L and the degree of -K against L^(n-1).

    L_degree = n! vol(P) and anticanonical_degree = (n-1)! |∂P|_lattice, the
    standard toric dictionary for the polarization defined by P.
    """
    n = P.dim
    vol = volume(P)
    if vol == 0:
        raise DegeneratePolytopeError("polytope is not full-dimensional")
    return {
        "L_degree": math.factorial(n) * vol,
        "anticanonical_degree": math.factorial(n - 1) * boundary_measure(P),
        "convention": "L_degree = n! vol(P); anticanonical_degree = (n-1)! * lattice boundary measure",
    }


def is_centrally_symmetric(P: LatticePolytope) -> bool:
    vs = set(P.vertices)
    return all(tuple(-x for x in v) in vs for v in vs)


STOCK_POLYTOPES = {
    "segment": [(0,), (1,)],
    "segment2": [(0,), (2,)],
    "square": [(0, 0), (1, 0), (0, 1), (1, 1)],
    "simplex2": [(0, 0), (1, 0), (0, 1)],
    "p2_anticanonical": [(-1, -1), (2, -1), (-1, 2)],
    "blp2": [(-1, -1), (2, -1), (-1, 1), (0, 1)],
    "p1xp1": [(-1, -1), (1, -1), (-1, 1), (1, 1)],
    "simplex3": [(0, 0, 0), (1, 0, 0), (0, 1, 0), (0, 0, 1)],
    "cube": [(x, y, z) for x in (0, 1) for y in (0, 1) for z in (0, 1)],
}


def stock(name: str) -> LatticePolytope:
    try:
        return LatticePolytope.from_vertices(STOCK_POLYTOPES[name])
    except KeyError:
        raise ValidationError(f"unknown stock polytope {name!r}") from None

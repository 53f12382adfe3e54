from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from kahlerlab import kstability as ks
from kahlerlab import polytope as pc
from kahlerlab.errors import FitError, ValidationError
from kahlerlab.kstability import AffinePiece, ToricTestConfiguration

F = Fraction


def affine(name, g, c=0):
    return ToricTestConfiguration.affine(pc.stock(name), g, c)


def direct_trace(P, g, c, k):
    """Σ_{x ∈ kP} k f(x/k) = Σ (<g,x> + k c), enumerated without the module."""
    pts = pc.lattice_points(P, k)
    return sum(F(sum(int(gi) * int(xi) if isinstance(gi, int) else gi * int(xi) for gi, xi in zip(g, x)))
               for x in pts) + k * c * len(pts)


def test_hilbert_coefficients():
    h = ks.hilbert_coefficients(pc.stock("simplex2"))
    assert (h.a0, h.a1) == (F(1, 2), F(3, 2))
    h = ks.hilbert_coefficients(pc.stock("square"))
    # (k+1)^2 = k^2 + 2k + 1
    assert (h.a0, h.a1) == (1, 2)
    h = ks.hilbert_coefficients(pc.stock("segment2"))
    assert (h.a0, h.a1) == (2, 1)


def test_weight_trace_simplex():
    # Σ_{i+j≤3} i = 10
    assert ks.weight_trace(affine("simplex2", [1, 0]), 3) == 10
    for k in range(1, 6):
        assert ks.weight_trace(affine("simplex2", [1, 0]), k) == F(k * (k + 1) * (k + 2), 6)


def test_weight_trace_constant_weights():
    P = pc.stock("blp2")
    for k in range(1, 4):
        assert ks.weight_trace(ToricTestConfiguration.affine(P, [0, 0], 0), k) == 0
        # f ≡ 1 contributes k per lattice point under Σ k f(x/k)
        assert ks.weight_trace(ToricTestConfiguration.affine(P, [0, 0], 1), k) == k * pc.lattice_point_count(P, k)


def test_weight_coefficients():
    w = ks.weight_coefficients(affine("simplex2", [1, 0]))
    assert (w.b0, w.b1) == (F(1, 6), F(1, 2))
    w = ks.weight_coefficients(affine("simplex2", [1, 1]))
    assert (w.b0, w.b1) == (F(1, 3), 1)
    w = ks.weight_coefficients(affine("square", [0, 0]))
    assert (w.b0, w.b1) == (0, 0)


def test_futaki_p2_zero_and_arithmetic():
    # 2(3/2 * 1/6 - 1/2 * 1/2)/(1/2) = 0
    assert ks.futaki_from_coefficients(ks.HilbertCoefficients(F(1, 2), F(3, 2)),
                                       ks.WeightCoefficients(F(1, 6), F(1, 2))) == 0
    rep = ks.donaldson_futaki(affine("simplex2", [1, 0]))
    assert rep.futaki == 0 and rep.verdict == "zero"
    for g in ([1, 0], [0, 1], [3, -7], [F(2, 5), F(1, 3)]):
        assert ks.donaldson_futaki(affine("p2_anticanonical", g)).futaki == 0


def test_blp2_nonzero_with_barycenter_oracle():
    P = pc.stock("blp2")
    bary = pc.barycenter(P)
    vol = pc.volume(P)
    for g in ([1, 0], [0, 1], [2, -3], [F(1, 2), F(5, 7)]):
        fut = ks.donaldson_futaki(ToricTestConfiguration.affine(P, g)).futaki
        # reflexive P: a1/a0 = 1 and b1 = ½∫_∂P f = ∫_P f for linear f, so Fut = -vol <g, bary>
        assert fut == -vol * sum(F(gi) * bi for gi, bi in zip(g, bary))
    assert ks.donaldson_futaki(ToricTestConfiguration.affine(P, [1, 0])).futaki == F(-1, 3)
    assert ks.donaldson_futaki(ToricTestConfiguration.affine(P, [0, 1])).verdict == "stable-direction"


@pytest.mark.parametrize("name", ["blp2", "simplex2", "square", "p1xp1", "segment2", "simplex3"])
def test_integral_oracle_agrees(name):
    P = pc.stock(name)
    g = [F(i + 2, i + 1) * (-1) ** i for i in range(P.dim)]
    assert ks.donaldson_futaki(ToricTestConfiguration.affine(P, g, F(1, 3))).futaki == \
        ks.futaki_integral_oracle(P, g, F(1, 3))


def test_b0_equals_integral_and_brute_force():
    P = pc.stock("blp2")
    g, c = [F(3, 2), -1], F(1, 4)
    tc = ToricTestConfiguration.affine(P, g, c)
    assert ks.weight_coefficients(tc).b0 == pc.integrate_affine(P, g, c)
    for k in range(1, 9):
        assert ks.weight_trace(tc, k) == direct_trace(P, g, c, k)


def test_concave_weight_two_pieces():
    # min(x1, x2) on the unit square: Σ_{i,j≤k} min(i,j) = k(k+1)(2k+1)/6, degree-3 polynomial
    P = pc.stock("square")
    tc = ToricTestConfiguration(P, (AffinePiece((F(1), F(0)), F(0)), AffinePiece((F(0), F(1)), F(0))))
    for k in range(1, 6):
        assert ks.weight_trace(tc, k) == F(k * (k + 1) * (2 * k + 1), 6)
    w = ks.weight_coefficients(tc)
    assert (w.b0, w.b1) == (F(1, 3), F(1, 2))
    assert not tc.is_product


def test_quasi_polynomial_weight_raises_fit_error():
    tc = ToricTestConfiguration(pc.stock("p2_anticanonical"),
                                (AffinePiece((F(1), F(0)), F(0)), AffinePiece((F(0), F(1)), F(1, 2))))
    with pytest.raises(FitError):
        ks.weight_coefficients(tc)


def test_eta():
    assert ks.eta_constant(pc.stock("segment")) == 2
    assert ks.eta_constant(pc.stock("simplex2")) == 6
    assert ks.eta_constant(pc.stock("simplex2").dilate(2)) == 3
    assert ks.eta_constant(pc.stock("p2_anticanonical")) == 2


def test_cm_degree():
    assert ks.cm_degree(1, 0, 1, 2) == 8
    assert ks.cm_degree(0, 0, 2, 5) == 0
    with pytest.raises(ValidationError):
        ks.cm_degree(1, 1, 0, 1)


def test_product_family_via_mixed_volume():
    terms = ks.product_family_terms(pc.stock("segment"))
    assert terms["relcanonical_term"] == 0 and terms["polarization_term"] == 0
    assert ks.cm_degree(terms["relcanonical_term"], terms["polarization_term"], 1, terms["eta"]) == 0


def test_json_roundtrip():
    data = {"polytope": {"vertices": [[0, 0], [1, 0], [0, 1]]},
            "weight": {"affine_pieces": [{"gradient": ["1/2", "-3"], "offset": "2/7"}]}}
    tc = ToricTestConfiguration.from_json(data)
    assert tc.pieces[0].gradient == (F(1, 2), F(-3))
    assert ToricTestConfiguration.from_json(tc.to_json()) == tc
    assert ks.DFReport(F(0), "zero").to_json()["futaki"] == "0"


def test_validation():
    with pytest.raises(ValidationError):
        ToricTestConfiguration.from_json({"polytope": {"vertices": [[0, 0], [1, 0], [0, 1]]},
                                          "weight": {"affine_pieces": [{"gradient": ["1"]}]}})
    with pytest.raises(ValidationError):
        ToricTestConfiguration.from_json({"polytope": {"vertices": [[0, 0], [1, 0], [0, 1]]},
                                          "weight": {"affine_pieces": [{"gradient": [0.5, 1]}]}})
    with pytest.raises(ValidationError):
        ks.weight_trace(affine("square", [1, 0]), 0)


rationals = st.fractions(min_value=-5, max_value=5, max_denominator=6)
STOCK2 = st.sampled_from(["blp2", "simplex2", "square", "p1xp1", "p2_anticanonical"])


@settings(max_examples=25, deadline=None)
@given(name=STOCK2, g=st.tuples(rationals, rationals), c=rationals)
def test_shift_invariance(name, g, c):
    P = pc.stock(name)
    assert ks.donaldson_futaki(ToricTestConfiguration.affine(P, g, c)).futaki == \
        ks.donaldson_futaki(ToricTestConfiguration.affine(P, g)).futaki


@settings(max_examples=25, deadline=None)
@given(name=STOCK2, g=st.tuples(rationals, rationals), h=st.tuples(rationals, rationals), a=rationals, b=rationals)
def test_linearity(name, g, h, a, b):
    P = pc.stock(name)

    def fut(v):
        return ks.donaldson_futaki(ToricTestConfiguration.affine(P, v)).futaki
    combo = [a * x + b * y for x, y in zip(g, h)]
    assert fut(combo) == a * fut(g) + b * fut(h)


@settings(max_examples=20, deadline=None)
@given(name=STOCK2, g=st.tuples(rationals, rationals),
       m=st.sampled_from([((1, 1), (0, 1)), ((0, 1), (-1, 0)), ((2, 1), (1, 1)), ((1, 0), (-2, 1))]),
       v=st.tuples(st.integers(-2, 2), st.integers(-2, 2)))
def test_unimodular_equivariance(name, g, m, v):
    P = pc.stock(name)
    Q = P.transform(m, v)
    # f(x) = <g, x>; on Q, f'(y) = f(M^{-1}(y - v)) = <M^{-T} g, y> - <M^{-T} g, v>
    (a, b), (c, d) = m
    det = a * d - b * c
    inv = ((F(d, det), F(-b, det)), (F(-c, det), F(a, det)))
    gq = [sum(inv[j][i] * g[j] for j in range(2)) for i in range(2)]
    off = -sum(gi * vi for gi, vi in zip(gq, v))
    assert ks.donaldson_futaki(ToricTestConfiguration.affine(Q, gq, off)).futaki == \
        ks.donaldson_futaki(ToricTestConfiguration.affine(P, g)).futaki


@settings(max_examples=20, deadline=None)
@given(g=st.tuples(rationals, rationals))
def test_central_symmetry_vanishing(g):
    P = pc.stock("p1xp1")
    assert pc.is_centrally_symmetric(P)
    assert ks.donaldson_futaki(ToricTestConfiguration.affine(P, g)).futaki == 0

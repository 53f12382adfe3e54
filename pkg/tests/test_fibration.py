import math

import numpy as np
import pytest

from kahlerlab import fibration as fb
from kahlerlab.errors import StencilError, ValidationError
from kahlerlab.fibration import BaseGrid, FamilyDescriptor, TauMap


def upper_half_plane_family(y, spacing=0.1, res=16, shift=0.0):
    """τ = s on a 5x5 base grid centered at shift + iy."""
    return FamilyDescriptor("torus_family", BaseGrid(complex(shift, y), spacing, 5),
                            TauMap("affine", 0j, 1 + 0j), res)


def isotrivial_family(tau=0.3 + 1.1j):
    return FamilyDescriptor("isotrivial", BaseGrid(0j, 0.1, 5), TauMap("isotrivial", tau))


def mixed_family():
    return FamilyDescriptor("torus_family", BaseGrid(0j, 0.1, 7), TauMap("mixed", 1j, 0.2 + 0j, 0.0))


# WP density

@pytest.mark.parametrize("y", [1.0, 2.0, 4.0])
def test_wp_estimators(y):
    fam = upper_half_plane_family(y)
    s = complex(0, y)
    fi = fb.wp_fiber_integral(fam, s)
    ks = fb.wp_via_ks_norm(fam, s)
    # KS norm |τ'|²/(4 Im τ²) = 1/(4y²); the five-point Laplacian of log(2y) is log(1 - h²/y²)/h² exactly
    assert ks.wp_density == pytest.approx(1 / (4 * y * y), rel=1e-14)
    h = fam.base_grid.spacing
    assert fi.wp_density == pytest.approx(-math.log(1 - h * h / (y * y)) / (4 * h * h), rel=1e-10)
    assert abs(fi.wp_density - ks.wp_density) <= 0.05 * ks.wp_density


def test_wp_scaling_exponent():
    ys = [1.0, 2.0, 4.0]
    vals = [fb.wp_fiber_integral(upper_half_plane_family(y), complex(0, y)).wp_density for y in ys]
    slope = np.polyfit(np.log(ys), np.log(vals), 1)[0]
    assert slope == pytest.approx(-2.0, rel=0.02)


def test_wp_translation_invariance():
    for y in (1.0, 2.0):
        a = fb.wp_fiber_integral(upper_half_plane_family(y), complex(0, y)).wp_density
        b = fb.wp_fiber_integral(upper_half_plane_family(y, shift=1.0), complex(1, y)).wp_density
        assert abs(a - b) <= 1e-8


def test_wp_isotrivial_vanishes():
    fam = isotrivial_family()
    assert all(w.wp_density <= 1e-10 for w in fb.wp_field(fam))
    assert all(w.wp_density == 0 for w in fb.wp_field(fam, "ks-norm"))


def test_wp_needs_interior_stencil():
    fam = upper_half_plane_family(1.0)
    corner = fam.base_grid.points()[0]
    with pytest.raises(StencilError):
        fb.wp_fiber_integral(fam, corner)
    with pytest.raises(ValidationError):
        fb.wp_fiber_integral(fam, 0.05 + 1j)


def test_wp_field_covers_interior():
    fam = upper_half_plane_family(2.0)
    assert len(fb.wp_field(fam)) == 9


# family validation

def test_family_validation():
    with pytest.raises(ValidationError):
        FamilyDescriptor("torus_family", BaseGrid(0j, 0.1, 5), TauMap("affine", 0j, 1 + 0j))
    with pytest.raises(ValidationError):
        FamilyDescriptor("isotrivial", BaseGrid(1j, 0.1, 5), TauMap("affine", 0j, 1 + 0j))
    with pytest.raises(ValidationError):
        FamilyDescriptor("klein_family", BaseGrid(1j, 0.1, 5), TauMap("affine", 0j, 1 + 0j))
    with pytest.raises(ValidationError):
        BaseGrid(0j, 0.1, 2)
    with pytest.raises(ValidationError):
        TauMap("quadratic")


def test_family_from_json():
    fam = FamilyDescriptor.from_json({"kind": "torus_family",
                                      "tau": {"preset": "affine", "a": [0, 0], "b": [1, 0]},
                                      "base_grid": {"center": [0, 2], "spacing": 0.1, "size": 5}})
    assert fam.parameter_map(2j) == 2j and fam.base_grid.size == 5
    with pytest.raises(ValidationError):
        FamilyDescriptor.from_json({"tau": {}})


def test_cauchy_riemann():
    assert fb.cauchy_riemann_residual(TauMap("affine", 1j, 0.5 + 0.2j), 0.3 + 1j) < 1e-9
    assert fb.cauchy_riemann_residual(TauMap("mixed", 1j, 0.5 + 0j, 0.0), -0.5) == 0.0


# fiberwise KE and foliation

def test_fiberwise_ke_flat():
    sk = fb.fiberwise_ke(upper_half_plane_family(1.5))
    assert sk.max_residual <= 1e-12
    assert all(c == 0.0 for c in sk.fiberwise_constant)
    assert all(m["area"] == pytest.approx(1.0, rel=1e-14) for m in sk.fiber_metrics)


def test_foliation_isotrivial_full_rank():
    rep = fb.foliation_report(isotrivial_family())
    assert rep.leaf_indicator
    assert all(e.rank == rep.fiber_dim == 1 for e in rep.entries)


def test_foliation_varying_family_rank_zero():
    rep = fb.foliation_report(upper_half_plane_family(1.0))
    assert not rep.leaf_indicator
    assert {e.rank for e in rep.entries} == {0}


def test_foliation_mixed_family():
    rep = fb.foliation_report(mixed_family())
    for e in rep.entries:
        assert e.rank == (1 if e.s.real <= 0 else 0)


def test_foliation_rank_matches_wp_vanishing():
    fam = mixed_family()
    for s in fam.base_grid.interior_points():
        wp = fb.wp_via_ks_norm(fam, s).wp_density
        assert (fb.foliation_rank(fam, s).rank == 1) == (wp <= 1e-10)


# horizontal identity

def test_horizontal_coefficient_closed_form():
    # for the potential y²/T + log T the horizontal coefficient is the constant -|τ'|²/(4T²)
    fam = upper_half_plane_family(1.0, res=32)
    rep = fb.horizontal_c_residual(fam, 1j)
    assert rep.ks_norm == pytest.approx(0.25)
    assert rep.c_mean == pytest.approx(-rep.ks_norm, rel=0.01)


def test_horizontal_residual_refines():
    out = [fb.horizontal_c_residual(upper_half_plane_family(1.0, res=r), 1j).residual for r in (8, 16, 32)]
    assert out[2] <= 0.05
    assert out[0] > out[1] > out[2]
    # centered differences: close to second order
    assert out[1] / out[2] > 3.0


def test_horizontal_isotrivial():
    rep = fb.horizontal_c_residual(isotrivial_family(), 0j)
    assert rep.absolute <= 1e-10 and rep.ks_norm == 0


# relative KE

def test_relative_ke_product():
    out = fb.product_relative_ke_residual()
    assert out["residual"] <= 1e-6 and not out["flagged"]


def test_relative_ke_torus_refines():
    coarse = fb.torus_relative_ke_residual(upper_half_plane_family(1.0, spacing=0.1))
    fine = fb.torus_relative_ke_residual(upper_half_plane_family(1.0, spacing=0.05))
    assert coarse["residual"] <= 5e-3
    assert fine["residual"] <= 0.5 * coarse["residual"]


def test_relative_ke_wrong_regime_flagged():
    out = fb.torus_relative_ke_residual(upper_half_plane_family(0.5), regime="fano")
    assert out["flagged"]


def test_relative_ke_rejects_singular_patch():
    fam = upper_half_plane_family(0.5)
    tau = fam.parameter_map
    base = fb.hyperbolic_base(tau)
    patch = fb.Patch((0.5j,), (0.5 + 0.25j,), 0.02, singular_points=(0.51j,))
    with pytest.raises(ValidationError):
        fb.relative_ke_residual(fb.semi_flat_total_metric(tau, base), base, lambda s: 0.0, patch)
    with pytest.raises(ValidationError):
        fb.relative_ke_residual(fb.semi_flat_total_metric(tau, base), base, lambda s: 0.0,
                                fb.Patch((0.5j,), (0.5,)), regime="calabi-yau")

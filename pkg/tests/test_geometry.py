import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from katobranch import geometry as geo


def _sympy_curvature(expr, t, value):
    """``-phi''/phi`` of a warp function, differentiated symbolically."""
    return float((-sp.diff(expr, t, 2) / expr).subs(t, value))


T = sp.Symbol("t")


# --- absolutely continuous curvature -------------------------------------------


def test_hat_curvature_vanishes_off_seam():
    assert geo.curvature_ac(geo.hat_profile(), 1.0) == pytest.approx(0.0, abs=1e-12)
    assert geo.curvature_ac(geo.hat_profile(), -2.5) == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("r", [0.0, 0.3, 1.0, 2.0, 5.0])
def test_base_curvature_matches_symbolic(r):
    expected = _sympy_curvature(sp.sqrt(1 + T**2), T, r)
    assert geo.curvature_ac(geo.base_profile(), r) == pytest.approx(expected, rel=1e-10, abs=1e-14)


def test_base_curvature_reference_values():
    assert geo.curvature_ac(geo.base_profile(), 0.0) == pytest.approx(-1.0)
    assert geo.curvature_ac(geo.base_profile(), 1.0) == pytest.approx(-0.25)


def test_base_curvature_sup_is_one():
    lo, hi = geo.curvature_bounds(geo.paper_base_metric())
    assert max(abs(lo), abs(hi)) == pytest.approx(1.0, abs=1e-6)


def test_hyperbolic_curvature_is_minus_one():
    s = geo.hyperbolic_cylinder()
    assert np.allclose(s.gaussian_curvature(np.linspace(-3, 3, 13)), -1.0)


@given(st.floats(-4.0, 4.0))
@settings(max_examples=40, deadline=None)
def test_base_curvature_finite_difference(r):
    p = geo.base_profile()
    h = 1e-4
    phi = lambda x: math.sqrt(1 + x * x)  # noqa: E731
    fd = (phi(r + h) - 2 * phi(r) + phi(r - h)) / h**2
    assert float(geo.curvature_ac(p, r)) == pytest.approx(-fd / phi(r), abs=1e-6)


def test_custom_profile_matches_builtin():
    custom = geo.custom_profile(["sqrt(1 + t**2)"], name="c")
    r = np.linspace(-3, 3, 11)
    assert np.allclose(geo.curvature_ac(custom, r), geo.curvature_ac(geo.base_profile(), r), atol=1e-12)


# --- curvature measure ---------------------------------------------------------


def test_hat_seam_weight():
    m = geo.curvature_measure(geo.paper_hat_metric())
    assert m.has_singular_part
    (rj, w), = m.singular_parts
    assert rj == 0.0
    assert w == pytest.approx(-2.0)
    assert m.singular_total(-1, 1) == pytest.approx(-4 * math.pi)


def test_base_metric_has_no_singular_part():
    assert not geo.curvature_measure(geo.paper_base_metric()).has_singular_part


@pytest.mark.parametrize("r0", [0.5, 1.0, 1.3])
def test_glued_spheres_weight(r0):
    m = geo.curvature_measure(geo.WarpedMetric(geo.glued_spheres_profile(r0), 12.0))
    weights = [w for _, w in m.singular_parts]
    assert weights and all(w == pytest.approx(-2 * math.cos(r0)) for w in weights)


def test_singular_weight_equals_jump_of_slope():
    # weight per unit theta = -(phi'(0+) - phi'(0-)) for a kinked warp
    p = geo.hat_profile()
    left, right = p.one_sided_derivatives(0.0)
    (_, w), = geo.curvature_measure(p).singular_parts
    assert w == pytest.approx(-(right - left))


def test_gauss_bonnet_on_hat_collar():
    s = geo.paper_hat_metric()
    m = geo.curvature_measure(s)
    mesh = geo.gauss_bonnet_mesh_total(s, -1.0, 1.0)
    assert m.total(-1.0, 1.0) == pytest.approx(-4 * math.pi, rel=1e-9)
    assert mesh == pytest.approx(m.total(-1.0, 1.0), rel=1e-3)


# --- conformal changes ---------------------------------------------------------


def test_paper_factor_values():
    assert geo.paper_conformal_factor(1.0) == pytest.approx(math.log(1 + 1 / math.sqrt(2)), abs=1e-12)
    assert geo.paper_conformal_factor(1.0) == pytest.approx(0.53479, abs=1e-5)
    assert geo.paper_conformal_factor(1e6) == pytest.approx(math.log(2), abs=1e-9)
    assert geo.paper_conformal_factor(0.0) == 0.0


def test_paper_factor_is_even_and_bounded():
    r = np.linspace(-20, 20, 4001)
    f = geo.paper_conformal_factor(r)
    assert np.allclose(f, f[::-1])
    assert f.max() <= math.log(2)


def test_paper_factor_derivatives_match_finite_differences():
    fld = geo.paper_factor_field()
    r = np.array([0.2, 0.7, 1.5, 3.0])
    h = 1e-5
    d1 = (fld(r + h) - fld(r - h)) / (2 * h)
    d2 = (fld(r + h) - 2 * fld(r) + fld(r - h)) / h**2
    assert np.allclose(fld.derivative(r, 1), d1, atol=1e-8)
    assert np.allclose(fld.derivative(r, 2), d2, atol=1e-4)


def test_constant_factor_scales_curvature():
    base = geo.paper_base_metric()
    c = 0.3
    s = geo.ConformalSurface(base, geo.RadialField.constant(c))
    r = np.linspace(-3, 3, 7)
    assert np.allclose(geo.conformal_curvature(s, r), math.exp(-2 * c) * base.gaussian_curvature(r))


def test_zero_factor_reproduces_base():
    base = geo.paper_base_metric()
    s = geo.ConformalSurface(base, geo.RadialField.constant(0.0))
    r = np.linspace(-3, 3, 7)
    assert np.allclose(s.gaussian_curvature(r), base.gaussian_curvature(r))


def test_conformal_surface_is_flat_off_seam():
    # e^{2f} g0 is isometric to the hat surface, which is flat away from t = 0
    s = geo.paper_conformal_surface()
    r = np.array([0.1, 0.5, 1.0, 3.0, -2.0])
    assert np.allclose(geo.conformal_curvature(s, r), 0.0, atol=1e-9)


def test_conformal_change_identity():
    rep = geo.verify_conformal_change()
    assert rep.passed
    assert rep.max_defect <= 1e-8
    assert rep.max_coordinate_defect <= 1e-8


def test_hat_coordinate_inverse_roundtrip():
    r = np.linspace(-5, 5, 101)
    assert np.allclose(geo.hat_coordinate_inverse(geo.hat_coordinate(r)), r, atol=1e-12)


def test_scaled_metric_shrinks_circles_only():
    base = geo.paper_base_metric()
    small = base.scaled(0.1)
    r = np.linspace(-2, 2, 5)
    assert np.allclose(small.B(r), 0.1 * base.B(r))
    assert np.allclose(small.A(r), base.A(r))

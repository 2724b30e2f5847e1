import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from katobranch import geodesics as gd
from katobranch import geometry as geo
from katobranch.acceptance import TAUT_CASES, planar_to_hat

PI = math.pi
HAT = geo.paper_hat_metric()

hat_points = st.tuples(st.floats(-3.0, 3.0), st.floats(0.0, 2 * PI))


def _planar(p):
    rho = 1.0 + abs(p[0])
    return np.array([rho * math.cos(p[1]), rho * math.sin(p[1])])


def _chord_clears_disk(a, b):
    # distance from the origin to the segment [a, b]
    d = b - a
    if d @ d == 0:
        return True
    s = np.clip(-(a @ d) / (d @ d), 0.0, 1.0)
    return np.linalg.norm(a + s * d) >= 1.0


# --- integration -----------------------------------------------------------------


def test_radial_geodesic_endpoint():
    path = gd.integrate_geodesic(HAT, (0.0, 0.0), (1.0, 0.0), 2.0)
    assert np.allclose(path.end, (2.0, 0.0), atol=1e-8)


def test_seam_direction_follows_the_seam():
    path = gd.integrate_geodesic(HAT, (0.0, 0.0), (0.0, 1.0), PI)
    assert path.end[0] == pytest.approx(0.0, abs=1e-8)
    assert path.end[1] == pytest.approx(PI, abs=1e-8)


def test_clairaut_invariant_on_smooth_surface():
    s = geo.paper_base_metric()
    path = gd.integrate_geodesic(s, (0.3, 0.0), psi=0.7, length=3.0)
    assert gd.clairaut_drift(s, path) <= 1e-8


def test_flat_geodesic_is_a_straight_line():
    s = geo.flat_cylinder()
    path = gd.integrate_geodesic(s, (0.0, 0.0), psi=PI / 4, length=1.0)
    assert np.allclose(path.end, (math.sqrt(0.5), math.sqrt(0.5)), atol=1e-8)


# --- exact distances on the hat surface ------------------------------------------


@pytest.mark.parametrize("pp,qq,exact", TAUT_CASES)
def test_taut_cases(pp, qq, exact):
    p, q = planar_to_hat(*pp), planar_to_hat(*qq)
    assert gd.distance(HAT, p, q) == pytest.approx(exact, abs=1e-6)


def test_taut_crossing_value():
    assert TAUT_CASES[2][2] == pytest.approx(4.73906, abs=1e-5)


@given(hat_points, hat_points)
@settings(max_examples=60, deadline=None)
def test_same_sheet_chord_is_euclidean(p, q):
    t_q = abs(q[0]) if p[0] >= 0 else -abs(q[0])
    q = (t_q, q[1])
    a, b = _planar(p), _planar(q)
    if _chord_clears_disk(a, b):
        assert gd.hat_distance(p, q) == pytest.approx(np.linalg.norm(a - b), abs=1e-9)


@given(hat_points, hat_points)
@settings(max_examples=60, deadline=None)
def test_hat_distance_symmetric(p, q):
    assert gd.hat_distance(p, q) == pytest.approx(gd.hat_distance(q, p), abs=1e-9)


@given(hat_points)
@settings(max_examples=40, deadline=None)
def test_sheet_swap_is_an_isometry(p):
    q = (0.7, 2.0)
    flip = lambda x: (-x[0], x[1])  # noqa: E731
    assert gd.hat_distance(flip(p), flip(q)) == pytest.approx(gd.hat_distance(p, q), abs=1e-9)


@given(hat_points, hat_points, hat_points)
@settings(max_examples=60, deadline=None)
def test_triangle_inequality(p, q, w):
    assert gd.hat_distance(p, q) <= gd.hat_distance(p, w) + gd.hat_distance(w, q) + 1e-9


@given(hat_points, hat_points)
@settings(max_examples=40, deadline=None)
def test_distance_at_least_radial_gap(p, q):
    # |t| changes at unit rate along unit-speed curves
    assert gd.hat_distance(p, q) >= abs(p[0] - q[0]) - 1e-12


def test_seam_is_minimizing_at_sampled_steps():
    for k in range(1, 17):
        s = k * PI / 16
        assert gd.distance(HAT, (0.0, 0.0), (0.0, s)) == pytest.approx(s, abs=1e-9)


def test_conformal_surface_uses_hat_distance():
    s = geo.paper_conformal_surface()
    r = geo.hat_coordinate_inverse(1.0)
    d = gd.distance(s, (0.0, 0.0), (float(r), 0.0))
    assert d == pytest.approx(1.0, abs=1e-9)


# --- graph oracle ----------------------------------------------------------------


def test_dijkstra_flat_cylinder():
    h = 0.01
    d = gd.mesh_dijkstra_distance(geo.flat_cylinder(), (0.0, 0.0), (0.0, PI), h=h)
    assert abs(d - PI) <= 3 * h


@pytest.mark.parametrize("pp,qq,exact", TAUT_CASES[:2])
def test_dijkstra_hat(pp, qq, exact):
    h = 0.01
    d = gd.mesh_dijkstra_distance(HAT, planar_to_hat(*pp), planar_to_hat(*qq), h=h)
    assert abs(d - exact) <= 3 * h
    assert d >= exact - 1e-9


def test_shooting_agrees_with_dijkstra_on_smooth_surface():
    s = geo.paper_base_metric()
    p, q = (0.0, 0.0), (1.0, 1.5)
    d = gd.distance(s, p, q)
    g = gd.mesh_dijkstra_distance(s, p, q, h=0.01)
    assert d <= g + 1e-9
    assert g - d <= 0.03


def test_shooting_path_has_distance_length():
    s = geo.paper_base_metric()
    res = gd.shortest_path(s, (0.0, 0.0), (0.5, 2.0))
    assert res.path.total_length == pytest.approx(res.value, rel=1e-6)
    assert np.allclose(res.path.end, (0.5, 2.0), atol=1e-5)


# --- branching ----------------------------------------------------------------


def test_tangent_branch_is_certified():
    cert = gd.certify_branching(HAT, gd.seam_trunk(), gd.tangent_branch(PI / 2), PI / 2)
    assert cert.certified, cert.failures
    assert cert.divergence > 0.1


def test_branch_equal_to_trunk_fails_divergence():
    cert = gd.certify_branching(HAT, gd.seam_trunk(), gd.seam_trunk(), PI / 2)
    assert "divergence" in cert.failures


def test_kinked_branch_fails_minimality():
    cert = gd.certify_branching(HAT, gd.seam_trunk(), gd.kinked_branch(PI / 2, 0.5), PI / 2)
    assert "branch-minimality" in cert.failures


def test_split_parameter_must_be_interior():
    with pytest.raises(ValueError):
        gd.certify_branching(HAT, gd.seam_trunk(), gd.tangent_branch(), 0.0)


# --- Lipschitz maps ----------------------------------------------------------------


def test_identity_map_ratio_is_one():
    assert gd.lipschitz_check("identity", gd.sample_pairs(50, seed=1)) == pytest.approx(1.0)


@pytest.mark.parametrize("name", ["fold_plus", "fold_minus", "seam_projection"])
def test_folds_are_one_lipschitz(name):
    assert gd.lipschitz_check(name, gd.sample_pairs(120, seed=2)) <= 1.0 + 1e-9


def test_wrap_angle_range():
    a = gd.wrap_angle(np.linspace(-20, 20, 101))
    assert np.all(a >= -PI) and np.all(a < PI)

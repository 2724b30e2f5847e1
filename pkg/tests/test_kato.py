import math

import numpy as np
import pytest

from katobranch import geometry as geo
from katobranch import kato
from katobranch.geometry import GeometryError

BASE = geo.paper_base_metric()


@pytest.fixture(scope="module")
def base_solver():
    return kato.solver_for(BASE)


# --- closed forms ---------------------------------------------------------------


def test_flat_cylinder_constant_is_zero():
    res = kato.kato_constant(geo.flat_cylinder(), 0.1, refine=False)
    assert res.value == 0.0


def test_hyperbolic_constant_equals_T():
    # Ric_- = 1 everywhere and the kernel has unit mass
    s = geo.hyperbolic_cylinder(6.0)
    for T in (0.01, 0.1, 0.25):
        assert kato.kato_constant(s, T, refine=False).value == pytest.approx(T, rel=1e-8)


def test_base_constant_at_most_T(base_solver):
    for T in (0.01, 0.1, 0.25):
        assert kato.kato_constant(BASE, T, solver=base_solver, refine=False).value <= T * (1 + 1e-9)


def test_singular_metric_is_refused():
    with pytest.raises(GeometryError):
        kato.ric_minus(geo.paper_hat_metric())


def test_ric_minus_sup_on_base():
    assert kato.ric_minus(BASE).sup == pytest.approx(1.0, abs=1e-6)


# --- two routes and refinement ---------------------------------------------------


@pytest.mark.parametrize("T", [0.02, 0.1])
def test_semigroup_and_kernel_routes_agree(base_solver, T):
    pts = (0.0, 1.0)
    a = kato.kato_constant(BASE, T, pts, solver=base_solver, refine=False)
    b = kato.kato_constant(BASE, T, pts, method="kernel", refine=False)
    assert b.value == pytest.approx(a.value, rel=0.01)


def test_refinement_change_small(base_solver):
    res = kato.kato_constant(BASE, 0.1, solver=base_solver)
    assert res.stable
    assert res.refinement_change < 0.01


def test_kato_profile_monotone_in_T(base_solver):
    times = np.geomspace(1e-3, 0.25, 8)
    prof = kato.kato_profile(BASE, times, solver=base_solver)
    assert np.all(np.diff(prof) > 0)


def test_unknown_method_rejected():
    with pytest.raises(ValueError):
        kato.kato_constant(BASE, 0.1, method="nope")


# --- measure route on the singular limit -----------------------------------------


def test_seam_measure_constant_scales_like_sqrt_T():
    # weight 2 per unit theta on a circle of unit length: k_T ~ (2 / sqrt(pi)) sqrt(T)
    T = 0.004
    k = kato.measure_kato_constant(geo.paper_hat_metric(), T)
    assert k / math.sqrt(T) == pytest.approx(2 / math.sqrt(math.pi), rel=0.03)


# --- scaling fits -----------------------------------------------------------------


def test_fit_recovers_exact_coefficients():
    T = np.array(kato.SCALING_TIMES)
    a, b, res = kato.fit_sqrt_linear(T, 0.3 * np.sqrt(T) + 0.7 * T)
    assert (a, b) == pytest.approx((0.3, 0.7), abs=1e-10)
    assert res < 1e-10


def test_hyperbolic_fit_is_linear():
    rep = kato.kato_scaling_report(geo.hyperbolic_cylinder(6.0))
    assert rep.a == pytest.approx(0.0, abs=1e-8)
    assert rep.b == pytest.approx(1.0, rel=1e-8)
    assert not rep.flagged


def test_flat_fit_is_zero():
    rep = kato.kato_scaling_report(geo.flat_cylinder())
    assert (rep.a, rep.b) == (0.0, 0.0)
    assert rep.residual == 0.0


# --- ball volumes ---------------------------------------------------------------


def test_flat_ball_volume():
    v = kato.ball_volume(geo.flat_cylinder(), (0.0, 0.0), 0.5)
    assert v.value == pytest.approx(math.pi / 4, rel=5e-3)
    assert v.stable


def test_hat_ball_at_seam_is_not_collapsed():
    v = kato.ball_volume(geo.paper_hat_metric(), (0.0, 0.0), 1.0)
    assert v.value >= 0.9 * math.pi


def test_smoothed_ball_volume_floor():
    fam = kato.paper_family((0.05,))
    s = fam.members[0].surface
    flat = kato.ball_volume(BASE, (0.0, 0.0), 0.5).value
    v = kato.ball_volume(s, (0.0, 0.0), 0.5).value
    assert v >= math.exp(-2 * fam.L) * flat


def test_ball_radius_must_be_positive():
    with pytest.raises(ValueError):
        kato.ball_volume(BASE, (0.0, 0.0), 0.0)


# --- certificate -----------------------------------------------------------------


@pytest.mark.slow
def test_paper_family_certified():
    cert = kato.certify_strong_kato_limit(kato.paper_family())
    assert cert.verdict == "PASS", cert.failures
    assert cert.envelope_inflation <= 1.25
    assert cert.a >= 0 and cert.b >= 0


@pytest.mark.slow
def test_constant_family_certified():
    cert = kato.certify_strong_kato_limit(kato.constant_family())
    assert cert.verdict == "PASS", cert.failures


@pytest.mark.slow
def test_collapsed_family_fails_on_volume():
    cert = kato.certify_strong_kato_limit(kato.collapsed_family())
    assert cert.verdict == "FAIL"
    assert any("volume" in f for f in cert.failures)


@pytest.mark.slow
def test_certificate_exports(tmp_path):
    cert = kato.certify_strong_kato_limit(kato.constant_family((0.1, 0.05)))
    rows = cert.to_csv(tmp_path / "c.csv").read_text().splitlines()
    assert rows[0] == "eps,T,k_T"
    assert len(rows) == 1 + 2 * len(cert.t_grid)
    assert '"verdict"' in cert.to_json(tmp_path / "c.json").read_text()

import math

import numpy as np
import pytest

from katobranch import geometry as geo
from katobranch import heat

FLAT = geo.flat_cylinder()
BASE = geo.paper_base_metric()


def _fourier_flat_kernel(t, dr, dth, k_max=60):
    """Flat-cylinder kernel by its angular Fourier series (second route to the image sum)."""
    dth = np.asarray(dth, dtype=float)
    k = np.arange(1, k_max + 1)
    ang = (1 + 2 * (np.exp(-k * k * t) * np.cos(dth[..., None] * k)).sum(-1)) / (2 * math.pi)
    return np.exp(-dr * dr / (4 * t)) / math.sqrt(4 * math.pi * t) * ang


def test_image_sum_matches_fourier_series():
    dr = np.linspace(-1, 1, 9)
    dth = np.linspace(-3, 3, 9)
    for t in (0.01, 0.05, 0.2):
        assert np.allclose(heat.flat_cylinder_kernel(t, dr, dth), _fourier_flat_kernel(t, dr, dth), rtol=1e-10)


@pytest.fixture(scope="module")
def flat_kernel():
    return heat.heat_kernel(FLAT, (0.0, 0.0), [0.01, 0.05])


def test_flat_kernel_matches_closed_form(flat_kernel):
    i = flat_kernel.time_index(0.05)
    H = flat_kernel.grid_values(i)
    th = flat_kernel.theta_grid()
    exact = _fourier_flat_kernel(0.05, flat_kernel.r[:, None] * np.ones_like(th), np.ones_like(flat_kernel.r)[:, None] * th)
    assert np.max(np.abs(H - exact)) / np.max(exact) <= 1e-3


def test_kernel_mass_is_one(flat_kernel):
    for i in range(flat_kernel.times.size):
        assert flat_kernel.mass(i) == pytest.approx(1.0, abs=1e-3)


def test_kernel_is_nonnegative(flat_kernel):
    assert flat_kernel.grid_values(0).min() >= -1e-8


def test_kernel_symmetry_on_curved_surface():
    x, y = (0.0, 0.0), (0.3, 0.4)
    t = 0.05
    hx = heat.heat_kernel(BASE, x, [t])
    hy = heat.heat_kernel(BASE, y, [t])
    a = float(hx.value(0, y[0], y[1])[0])
    b = float(hy.value(0, x[0], x[1])[0])
    assert a > 0.1
    assert a == pytest.approx(b, rel=5e-3)


def test_mode_decay_bound():
    # each angular mode decays at least like exp(-k^2 t / max B^2)
    ker = heat.heat_kernel(BASE, (0.0, 0.0), [0.02, 0.1], modes=4)
    Bmax = float(ker.B.max())
    for k in range(1, 5):
        h0 = np.max(np.abs(ker.coeffs[0, k]))
        h1 = np.max(np.abs(ker.coeffs[1, k]))
        assert h1 <= math.exp(-k * k * 0.08 / Bmax**2) * h0 * 1.05


def test_times_outside_range_rejected():
    with pytest.raises(ValueError):
        heat.heat_kernel(FLAT, (0.0, 0.0), [0.5])
    with pytest.raises(ValueError):
        heat.heat_kernel(FLAT, (0.0, 0.0), [0.0])


def test_binary_roundtrip(tmp_path, flat_kernel):
    path = flat_kernel.to_binary(tmp_path / "k.bin", n_theta=32)
    blob = path.read_bytes()
    assert blob[:4] == b"KBHK"
    header, data = heat.read_kernel_binary(path)
    assert header["axes"] == ["t", "r", "theta"]
    assert data.shape == (2, flat_kernel.r.size, 32)
    assert np.allclose(data[1], flat_kernel.grid_values(1, 32))


def test_csv_export(tmp_path, flat_kernel):
    path = flat_kernel.to_csv(tmp_path / "k.csv", n_theta=8, stride=50)
    lines = path.read_text().splitlines()
    assert lines[0] == "t,r,theta,H"
    assert len(lines) > 1


# --- semigroup -----------------------------------------------------------------


@pytest.fixture(scope="module")
def flat_solver():
    return heat.SemigroupSolver(FLAT, du=0.01)


def test_semigroup_preserves_constants(flat_solver):
    out = heat.semigroup_apply(FLAT, lambda r: np.ones_like(r), 0.3, solver=flat_solver)
    assert np.allclose(out.values, 1.0, atol=1e-10)


def test_semigroup_damps_angular_mode(flat_solver):
    out = heat.semigroup_apply(FLAT, lambda r, th: np.cos(2 * th), 0.1, solver=flat_solver)
    val = float(out(np.array([0.0]), np.array([0.0]))[0])
    assert val == pytest.approx(math.exp(-0.4), abs=1e-6)
    assert math.exp(-0.4) == pytest.approx(0.67032, abs=1e-5)


def test_semigroup_contracts_sup_norm():
    solver = heat.SemigroupSolver(BASE)
    f = np.sin(solver.r) * np.exp(-0.1 * solver.r**2)
    g = solver.apply(f, 0.2, 0)
    assert np.max(np.abs(g)) <= np.max(np.abs(f)) + 1e-12


def test_semigroup_laplacian_of_quadratic_on_flat(flat_solver):
    # positive Laplacian of r^2 on the flat cylinder is -2
    lap = flat_solver.laplacian(flat_solver.r**2, 0)
    assert np.allclose(lap[5:-5], -2.0, atol=1e-6)


# --- smoothing ------------------------------------------------------------------


@pytest.fixture(scope="module")
def smoothing():
    return heat.smooth_conformal_factor(
        BASE, geo.paper_factor_field(), (0.1, 0.05, 0.025), L=math.log(2), lam=1.0, kappa=1.0, K=0.0
    )


def test_smoothing_checks_pass(smoothing):
    assert smoothing.passed, smoothing.checks


def test_smoothed_factor_bounded_by_limit(smoothing):
    for m in smoothing.members:
        assert m.sup_norm <= math.log(2) + 1e-12


def test_smoothing_deviation_scales_like_sqrt_eps(smoothing):
    for m in smoothing.members:
        assert m.sup_deviation <= smoothing.C * math.sqrt(m.eps) * (1 + 1e-12)
    assert smoothing.member(0.025).sup_deviation < smoothing.member(0.1).sup_deviation


def test_smoothed_curvature_bound(smoothing):
    for m in smoothing.members:
        assert m.sup_curvature <= smoothing.curvature_bound * 1.05


def test_smoothed_surfaces_are_smooth(smoothing):
    assert all(m.surface.is_smooth for m in smoothing.members)


# --- moments, tails, Li-Yau ------------------------------------------------------


def test_flat_first_moment():
    T = 0.01
    rep = heat.first_moment(FLAT, (0.0, 0.0), T)
    assert rep.moment == pytest.approx(math.sqrt(math.pi * T), rel=0.02)
    assert rep.inner + rep.tail_stieltjes == pytest.approx(rep.moment, rel=0.02)


def test_flat_tail_mass():
    tail = heat.tail_mass(FLAT, (0.0, 0.0), 0.5, 0.01)
    assert tail == pytest.approx(math.exp(-6.25), rel=0.05)
    assert math.exp(-6.25) == pytest.approx(1.93e-3, rel=1e-2)


def test_tail_fit_recovers_gaussian_rate():
    samples = [(R, t, math.exp(-R * R / (4 * t))) for R in (0.3, 0.5) for t in (0.01, 0.02, 0.04)]
    fit = heat.fit_tail_bound(samples)
    assert fit.c == pytest.approx(0.25, rel=1e-9)
    assert fit.C == pytest.approx(1.0, rel=1e-9)


def test_flat_liyau_ratio_at_most_quarter():
    samples = heat.liyau_samples(FLAT, 12, (0.0,), t_range=(2e-3, 2e-2), seed=3, levels=2)
    rep = heat.liyau_check(FLAT, samples)
    assert rep.max_ratio <= 0.25 * 1.01


@pytest.mark.slow
def test_liyau_stable_under_refinement(smoothing):
    s = smoothing.member(0.05).surface
    samples = heat.liyau_samples(s, 8, (0.0, 1.0), t_range=(5e-3, 5e-2), seed=4, levels=2)
    a = heat.liyau_check(s, samples).max_ratio
    b = heat.liyau_check(s, samples, du_scale=0.5).max_ratio
    assert b == pytest.approx(a, rel=0.1)


# --- semigroup identity ----------------------------------------------------------


def test_identity_flat_cosine(flat_solver):
    T = 0.1
    rep = heat.semigroup_identity_check(
        FLAT,
        lambda r, th: np.cos(th),
        lambda r, th: np.cos(th),
        T,
        [(0.0, 0.0), (0.5, 1.0)],
        theta_dependent=True,
        n_times=101,
        solver=flat_solver,
    )
    expected = (math.exp(-T) - 1) * np.cos([0.0, 1.0])
    assert np.allclose(rep.rhs, expected, atol=1e-6)
    assert rep.defect <= 1e-4


def test_identity_constant_is_trivial():
    rep = heat.semigroup_identity_check(
        BASE, lambda r: np.ones_like(r), lambda r: np.zeros_like(r), 0.05, [(0.0, 0.0)], n_times=21
    )
    assert abs(rep.lhs[0]) <= 1e-12
    assert abs(rep.rhs[0]) <= 1e-9

"""Registry of the acceptance checks and the run report they feed.

Every check takes an :class:`ExperimentConfig` and returns a
:class:`CheckResult` with the measured value, the bound it is compared to and
the tolerance in force.  The registry order is fixed so reports are
reproducible.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import geodesics as geo
from . import heat, kato
from .config import ExperimentConfig
from .geometry import (
    RadialField,
    WarpedMetric,
    flat_cylinder,
    gauss_bonnet_mesh_total,
    glued_spheres_profile,
    hyperbolic_cylinder,
    laplacian_radial,
    paper_base_metric,
    paper_conformal_surface,
    paper_factor_field,
    paper_hat_metric,
)

PI = math.pi


@dataclass
class CheckResult:
    id: int
    key: str
    title: str
    passed: bool
    measured: float
    bound: float
    tolerance: float
    details: dict = field(default_factory=dict)
    seconds: float = 0.0

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (
            f"[{status}] {self.id:2d} {self.key}: measured={self.measured:.6g} "
            f"bound={self.bound:.6g} tol={self.tolerance:.3g} ({self.seconds:.1f}s)"
        )

    def as_dict(self) -> dict:
        return _jsonable(asdict(self))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


# ---------------------------------------------------------------------------
# Shared fixtures (cached per process)
# ---------------------------------------------------------------------------

_CACHE: dict = {}


def smoothing_family(cfg: ExperimentConfig, eps=None) -> heat.SmoothingFamily:
    eps = tuple(eps or cfg.eps)
    key = ("smoothing", eps, cfg.tol_scale, cfg.getint("grids", "semigroup_nodes"))
    if key not in _CACHE:
        _CACHE[key] = heat.smooth_conformal_factor(
            paper_base_metric(),
            paper_factor_field(),
            eps,
            L=cfg.getfloat("smoothing", "L"),
            lam=cfg.getfloat("smoothing", "lambda"),
            kappa=cfg.getfloat("smoothing", "kappa"),
            K=cfg.getfloat("smoothing", "K"),
            lip_slack=cfg.tol("lipschitz_eps"),
            C_stability=cfg.tol("stability"),
            curvature_slack=cfg.tol("curvature"),
        )
    return _CACHE[key]


def _timed(fn: Callable[[ExperimentConfig], CheckResult]):
    def run(cfg: ExperimentConfig) -> CheckResult:
        t0 = time.perf_counter()
        res = fn(cfg)
        res.seconds = time.perf_counter() - t0
        return res

    run.__name__ = fn.__name__
    run.__doc__ = fn.__doc__
    return run


# ---------------------------------------------------------------------------
# Checks
# ---------------------------------------------------------------------------


@_timed
def check_branching(cfg: ExperimentConfig) -> CheckResult:
    """Seam trunk and tangent branch: both minimizing, equal up to the split, then apart."""
    t0 = time.perf_counter()
    hat = paper_hat_metric()
    cert = geo.certify_branching(
        hat,
        geo.seam_trunk(PI),
        geo.tangent_branch(PI / 2, PI),
        PI / 2,
        tol=cfg.tol("minimality"),
        agreement_tol=cfg.tol("agreement"),
        min_divergence=cfg.getfloat("tolerances", "divergence"),
    )
    secs = time.perf_counter() - t0
    budget = cfg.tol("branching_seconds")
    worst = max(cert.minimality_defects)
    ok = cert.certified and secs <= budget
    return CheckResult(1, "branching", "branching certificate", ok, worst, 0.0, cfg.tol("minimality"),
                       {**cert.as_dict(), "runtime_s": secs, "runtime_budget_s": budget})


@_timed
def check_boundary_geodesic(cfg: ExperimentConfig) -> CheckResult:
    """The seam circle is minimizing between (0,0) and (0,s)."""
    hat = paper_hat_metric()
    h = cfg.getfloat("grids", "dijkstra_h")
    rows, worst_d, worst_g = [], 0.0, 0.0
    for s in (PI / 4, PI / 2, 3 * PI / 4, PI):
        d = geo.distance(hat, (0.0, 0.0), (0.0, s))
        g = geo.mesh_dijkstra_distance(hat, (0.0, 0.0), (0.0, s), h=h)
        worst_d = max(worst_d, abs(d - s))
        worst_g = max(worst_g, abs(g - s))
        rows.append({"s": s, "distance": d, "dijkstra": g})
    tol = cfg.tol("minimality")
    ok = worst_d <= tol and worst_g <= 3 * h * cfg.tol_scale
    return CheckResult(2, "boundary-geodesic", "seam arcs are minimizing", ok, worst_d, 0.0, tol,
                       {"rows": rows, "dijkstra_defect": worst_g, "dijkstra_tolerance": 3 * h * cfg.tol_scale})


def planar_to_hat(x: float, y: float, sheet: int = 1) -> tuple[float, float]:
    """Point of the exterior-disk chart ``(1 + |t|)(cos theta, sin theta)`` on a sheet."""
    rho = math.hypot(x, y)
    if rho < 1.0:
        raise ValueError("planar chart points lie outside the unit disk")
    return (sheet * (rho - 1.0), math.atan2(y, x) % (2 * PI))


# planar chart points on the upper sheet and their closed-form distance
TAUT_CASES = (
    ((1.0, 0.0), (0.0, 1.0), PI / 2),
    ((2.0, 0.0), (0.0, 2.0), 2 * math.sqrt(2.0)),
    ((1.0, 0.0), (-3.0, 0.0), math.sqrt(8.0) + PI - math.acos(1.0 / 3.0)),
)


@_timed
def check_taut(cfg: ExperimentConfig) -> CheckResult:
    """Closed-form distances around the unit disk, on one sheet and across the seam."""
    hat = paper_hat_metric()
    h = cfg.getfloat("grids", "dijkstra_h")
    rows, worst, worst_g = [], 0.0, 0.0
    for pp, qq, exact in TAUT_CASES:
        p, q = planar_to_hat(*pp), planar_to_hat(*qq)
        d = geo.distance(hat, p, q)
        g = geo.mesh_dijkstra_distance(hat, p, q, h=h)
        worst = max(worst, abs(d - exact))
        worst_g = max(worst_g, abs(g - exact))
        rows.append({"planar_p": pp, "planar_q": qq, "p": p, "q": q, "exact": exact, "distance": d, "dijkstra": g})
    tol = cfg.tol("distance")
    ok = worst <= tol and worst_g <= 3 * h * cfg.tol_scale
    return CheckResult(3, "taut-distances", "taut-string distances", ok, worst, 0.0, tol,
                       {"rows": rows, "dijkstra_defect": worst_g, "dijkstra_tolerance": 3 * h * cfg.tol_scale})


@_timed
def check_lipschitz(cfg: ExperimentConfig) -> CheckResult:
    """Folds onto one sheet and the projection onto the seam do not stretch distances."""
    pairs = geo.sample_pairs(500, seed=cfg.seed)
    ratios = {name: geo.lipschitz_check(name, pairs) for name in ("fold_plus", "fold_minus", "seam_projection")}
    worst = max(ratios.values())
    bound = 1.0 + cfg.tol("lipschitz")
    return CheckResult(4, "lipschitz-maps", "1-Lipschitz maps", worst <= bound, worst, bound, cfg.tol("lipschitz"),
                       {"ratios": ratios, "pairs": len(pairs)})


def mass_surfaces(cfg: ExperimentConfig):
    sm = smoothing_family(cfg)
    mid = sm.members[len(sm.members) // 2]
    return [
        paper_hat_metric(),
        paper_base_metric(),
        paper_conformal_surface(),
        flat_cylinder(),
        hyperbolic_cylinder(),
        WarpedMetric(glued_spheres_profile(1.0)),
        mid.surface,
    ]


@_timed
def check_heat(cfg: ExperimentConfig) -> CheckResult:
    """Flat kernel against the image sum; unit mass on every surface."""
    flat = flat_cylinder()
    times = (0.01, 0.05, 0.1)
    ker = heat.heat_kernel(flat, (0.0, 0.0), times)
    rel = {}
    for i, t in enumerate(times):
        H = ker.grid_values(i)
        R, TH = np.meshgrid(ker.r, ker.theta_grid(), indexing="ij")
        exact = heat.flat_cylinder_kernel(t, R, geo.wrap_angle(TH))
        rel[t] = float(np.max(np.abs(H - exact)) / np.max(exact))
    masses = {}
    for s in mass_surfaces(cfg):
        k = heat.heat_kernel(s, (0.0, 0.0), (0.01, 0.1, 0.25), modes=0)
        masses[s.name] = max(abs(k.mass(i) - 1.0) for i in range(3))
    worst_rel = max(rel.values())
    worst_mass = max(masses.values())
    ok = worst_rel <= cfg.tol("kernel_relative") and worst_mass <= cfg.tol("mass")
    return CheckResult(5, "heat-oracle", "flat closed form and mass conservation", ok, worst_rel, 0.0,
                       cfg.tol("kernel_relative"),
                       {"relative_error": rel, "mass_defect": masses, "mass_tolerance": cfg.tol("mass")})


@_timed
def check_smoothing(cfg: ExperimentConfig) -> CheckResult:
    """Heat regularization of the conformal factor keeps sup, Lipschitz and curvature bounds."""
    sm = smoothing_family(cfg)
    d = sm.as_dict()
    return CheckResult(6, "smoothing", "smoothing diagnostics", sm.passed, sm.C_spread, cfg.tol("stability"),
                       cfg.tol("stability"), d)


@_timed
def check_first_moment(cfg: ExperimentConfig) -> CheckResult:
    """First moment of the kernel scales like sqrt(T) uniformly in the base point."""
    sm = smoothing_family(cfg)
    member = sm.members[len(sm.members) // 2]
    times = (1e-3, 1e-2, 1e-1)
    ratios = []
    rows = []
    for x in cfg.base_points:
        for T in times:
            rep = heat.first_moment(member.surface, (x, 0.0), T)
            ratios.append(rep.ratio)
            rows.append({"x": x, "T": T, "moment": rep.moment, "ratio": rep.ratio, "stieltjes_split": rep.inner + rep.tail_stieltjes})
    ratios = np.array(ratios)
    spread = float((ratios.max() - ratios.min()) / ratios.max())
    flat = {}
    for T in times:
        rep = heat.first_moment(flat_cylinder(), (0.0, 0.0), T)
        flat[T] = abs(rep.moment / math.sqrt(PI * T) - 1.0)
    ok = spread <= cfg.tol("stability") and max(flat.values()) <= cfg.tol("moment_flat")
    return CheckResult(7, "first-moment", "first moment ~ c sqrt(T)", ok, spread, cfg.tol("stability"), cfg.tol("stability"),
                       {"eps": member.eps, "c": float(ratios.max()), "rows": rows, "flat_relative_error": flat,
                        "flat_tolerance": cfg.tol("moment_flat")})


@_timed
def check_kato_scaling(cfg: ExperimentConfig) -> CheckResult:
    """k_T of each smoothing fits a sqrt(T) + b T; the sqrt(T) constant is stable across the family."""
    sm = smoothing_family(cfg)
    nodes = cfg.getint("grids", "semigroup_nodes")
    T_fit = cfg.floats("kato", "scaling_times")
    T_sup = cfg.floats("kato", "stability_times")
    members, consts, residuals = [], [], []
    for m in sm.members:
        solver = kato.solver_for(m.surface, nodes)
        rep = kato.kato_scaling_report(m.surface, T_fit, cfg.base_points, tolerance=cfg.tol("fit_residual"), solver=solver)
        k_sup = kato.kato_profile(m.surface, T_sup, cfg.base_points, solver=solver)
        C = float(np.max(k_sup / np.sqrt(T_sup)))
        consts.append(C)
        residuals.append(rep.residual)
        members.append({**rep.as_dict(), "eps": m.eps, "C_full_range": C, "k_full_range": k_sup.tolist()})
    consts = np.array(consts)
    spread = float((consts.max() - consts.min()) / consts.max())
    g0 = kato.kato_profile(paper_base_metric(), T_fit, cfg.base_points)
    sanity = float(np.max(g0 / np.asarray(T_fit)))
    limit = [kato.measure_kato_constant(paper_hat_metric(), T) / math.sqrt(T) for T in T_fit]
    ok_fit = max(residuals) <= cfg.tol("fit_residual")
    ok_stab = spread <= cfg.tol("stability")
    ok_sanity = sanity <= 1.0 + cfg.tol("kato_sanity")
    return CheckResult(8, "kato-scaling", "Kato constant ~ sqrt(T)", ok_fit and ok_stab and ok_sanity, spread,
                       cfg.tol("stability"), cfg.tol("stability"),
                       {"members": members, "max_residual": max(residuals), "residual_ok": ok_fit,
                        "stability_ok": ok_stab, "g0_max_k_over_T": sanity, "g0_ok": ok_sanity,
                        "limit_k_over_sqrtT": dict(zip(T_fit, limit)),
                        "bounded_by_limit": bool(consts.max() <= max(limit))})


@_timed
def check_certificate(cfg: ExperimentConfig) -> CheckResult:
    """Strong-Kato-limit certificate: PASS on the smoothings, FAIL on the collapsed family."""
    t0 = time.perf_counter()
    eps = cfg.floats("kato", "certify_eps")
    ccfg = certify_config(cfg)
    paper = kato.family_from_smoothing(smoothing_family(cfg, eps), "paper")
    good = kato.certify_strong_kato_limit(paper, ccfg)
    collapsed = kato.collapsed_family(eps, cfg.getfloat("kato", "collapse_delta"))
    bad = kato.certify_strong_kato_limit(collapsed, ccfg)
    secs = time.perf_counter() - t0
    budget = cfg.tol("certify_seconds")
    ok = good.verdict == "PASS" and bad.verdict == "FAIL" and not bad.components["volume"] and secs <= budget
    return CheckResult(9, "kato-certificate", "non-collapsed strong Kato limit", ok, good.volume_floor, 0.0, 0.0,
                       {"paper": good.as_dict(), "collapsed": bad.as_dict(), "runtime_s": secs, "runtime_budget_s": budget})


def certify_config(cfg: ExperimentConfig) -> kato.CertifyConfig:
    return kato.CertifyConfig(
        T=cfg.getfloat("kato", "T"),
        t_grid=cfg.floats("kato", "t_grid"),
        base_points=cfg.base_points,
        n_pairs=cfg.getint("kato", "n_pairs"),
        pair_extent=cfg.getfloat("kato", "pair_extent"),
        seed=cfg.seed,
        nodes=cfg.getint("grids", "semigroup_nodes"),
    )


def identity_cases():
    """Test bumps ``(surface, u, laplacian u, theta_dependent, points)``."""
    g0 = paper_base_metric()
    bump = RadialField(
        lambda r: np.exp(-np.asarray(r) ** 2),
        lambda r: -2 * np.asarray(r) * np.exp(-np.asarray(r) ** 2),
        lambda r: (4 * np.asarray(r) ** 2 - 2) * np.exp(-np.asarray(r) ** 2),
        (),
        "gaussian-bump",
    )
    lap = lambda r: laplacian_radial(g0, bump, r)  # noqa: E731
    flat = flat_cylinder()

    def wave(r, th):
        return np.exp(-np.asarray(r) ** 2) * np.cos(th)

    def wave_lap(r, th):
        r = np.asarray(r)
        return -((4 * r * r - 2) - 1.0) * np.exp(-r * r) * np.cos(th)

    pts = [(0.0, 0.0), (0.5, 0.0), (1.0, 1.0)]
    return [(g0, bump, lap, False, pts), (flat, wave, wave_lap, True, pts)]


@_timed
def check_identity(cfg: ExperimentConfig) -> CheckResult:
    """Integrating the Laplacian against the kernel reproduces the semigroup increment."""
    T = 0.1
    worst, rows = 0.0, []
    for surface, u, lap, theta_dep, pts in identity_cases():
        rep = heat.semigroup_identity_check(surface, u, lap, T, pts, theta_dependent=theta_dep)
        worst = max(worst, rep.defect)
        rows.append({"surface": surface.name, "defect": rep.defect, "lhs": rep.lhs, "rhs": rep.rhs})
    tol = cfg.tol("identity")
    return CheckResult(10, "semigroup-identity", "kernel integral of the Laplacian", worst <= tol, worst, 0.0, tol,
                       {"T": T, "rows": rows})


@_timed
def check_gauss_bonnet(cfg: ExperimentConfig) -> CheckResult:
    """Total curvature of the hat surface from mesh angle defects."""
    hat = paper_hat_metric()
    rows = {}
    for R in (1.0, 2.0, 5.0):
        rows[R] = gauss_bonnet_mesh_total(hat, -R, R)
    worst = max(abs(v + 4 * PI) for v in rows.values())
    tol = cfg.tol("gauss_bonnet") * 4 * PI
    return CheckResult(11, "gauss-bonnet", "total curvature -4 pi", worst <= tol, worst, 0.0, tol,
                       {"totals": rows, "expected": -4 * PI})


REGISTRY: tuple[tuple[int, str, Callable[[ExperimentConfig], CheckResult]], ...] = (
    (1, "branching", check_branching),
    (2, "boundary-geodesic", check_boundary_geodesic),
    (3, "taut-distances", check_taut),
    (4, "lipschitz-maps", check_lipschitz),
    (5, "heat-oracle", check_heat),
    (6, "smoothing", check_smoothing),
    (7, "first-moment", check_first_moment),
    (8, "kato-scaling", check_kato_scaling),
    (9, "kato-certificate", check_certificate),
    (10, "semigroup-identity", check_identity),
    (11, "gauss-bonnet", check_gauss_bonnet),
)


def select(filter_: str | None):
    """Registry entries matching a comma-separated list of ids or key substrings."""
    if not filter_:
        return list(REGISTRY)
    wanted = [w.strip() for w in filter_.split(",") if w.strip()]
    out = [e for e in REGISTRY if any(w == str(e[0]) or w in e[1] for w in wanted)]
    if not out:
        raise KeyError(f"no check matches {filter_!r}")
    return out


@dataclass
class RunReport:
    config: dict
    checks: list[CheckResult]
    artifacts: dict[str, str] = field(default_factory=dict)
    timings: dict[str, float] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def as_dict(self) -> dict:
        return {
            "config": self.config,
            "passed": self.passed,
            "checks": [c.as_dict() for c in self.checks],
            "artifacts": self.artifacts,
            "timings": self.timings,
        }

    def write(self, path: str | Path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.as_dict(), indent=2, sort_keys=False))
        return path


def run_checks(cfg: ExperimentConfig, filter_: str | None = None, echo: Callable[[str], None] | None = None) -> RunReport:
    t0 = time.perf_counter()
    results = []
    for _, _, fn in select(filter_):
        res = fn(cfg)
        results.append(res)
        if echo:
            echo(res.line())
    return RunReport(cfg.as_dict() | {"tol_scale": cfg.tol_scale}, results, timings={"total_s": time.perf_counter() - t0})

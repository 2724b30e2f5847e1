"""Kato constants, volume floors and the strong-Kato-limit certificate.

The Kato constant at scale ``T`` of a surface is
``k_T = sup_x int_0^T int H(t, x, y) Ric_-(y) dv(y) dt``
with ``Ric_- = max(0, -K)``.  It is computed by two independent routes:

* ``"semigroup"``: the Duhamel integral ``int_0^T exp(-t L) Ric_- dt`` of the
  diagonalized generator, which yields ``k_T(x)`` for every grid point at once;
* ``"kernel"``: the Crank-Nicolson kernel from each base point followed by a
  quadrature in time.

The certificate collects three checks for a family of smooth metrics
approximating a singular limit: a single control function ``a sqrt(t) + b t``
bounding every measured ``k_t``, a single volume floor at scale ``sqrt(T)``,
and a bilipschitz bound on the distance defect.
"""

from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.optimize import nnls

from .geodesics import distance, distance_field, hat_chart, hat_distance
from .geometry import (
    ConformalSurface,
    GeometryError,
    RotationalSurface,
    WarpedMetric,
    curvature_measure,
    paper_base_metric,
    paper_conformal_surface,
    paper_factor_field,
)
from .heat import (
    SemigroupSolver,
    SmoothingFamily,
    ball_volume_from_field,
    heat_kernel,
    kernel_window,
    smooth_conformal_factor,
)

BASE_POINTS = (0.0, 0.25, 0.5, 1.0, 2.0, 4.0)
SCALING_TIMES = (1e-3, 4e-3, 1.6e-2, 6.4e-2)
TWO_PI = 2.0 * math.pi


# ---------------------------------------------------------------------------
# Negative curvature part
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RicMinusField:
    """``max(0, -K)`` per unit area of a smooth rotational surface."""

    surface: RotationalSurface = field(repr=False)
    r: np.ndarray = field(repr=False)
    density: np.ndarray = field(repr=False)

    def __call__(self, r):
        k = np.asarray(self.surface.gaussian_curvature(np.asarray(r, dtype=float)), dtype=float)
        out = np.maximum(0.0, -k)
        return out if out.ndim else float(out)

    @property
    def sup(self) -> float:
        return float(self.density.max())


def ric_minus(surface: RotationalSurface, n: int = 4001) -> RicMinusField:
    """Negative part of the Gaussian curvature, sampled on a radial grid.

    Raises :class:`GeometryError` when the curvature has a singular part.
    """
    if not surface.is_smooth:
        raise GeometryError(
            f"{surface.name} has curvature concentrated on circles {surface.breakpoints}; "
            "the negative part is only defined for smooth metrics"
        )
    r = np.linspace(surface.r_min, surface.r_max, n)
    out = RicMinusField(surface, r, np.zeros(n))
    object.__setattr__(out, "density", np.asarray(out(r), dtype=float))
    return out


# ---------------------------------------------------------------------------
# Kato constant
# ---------------------------------------------------------------------------


def solver_for(surface: RotationalSurface, nodes: int = 3201) -> SemigroupSolver:
    """Whole-surface semigroup with a fixed node count (the chart length varies a lot)."""
    lo, hi = surface.u_range
    return SemigroupSolver(surface, du=(hi - lo) / (nodes - 1))


def _semigroup_profiles(solver: SemigroupSolver, ric: RicMinusField, times: Sequence[float]) -> np.ndarray:
    rho = np.asarray(ric(solver.r), dtype=float)
    return np.stack([solver.duhamel(rho, float(T), 0) for T in times])


def _kernel_route(surface: RotationalSurface, ric: RicMinusField, r_x: float, T: float, n_times: int) -> float:
    # quadratic time grid: dense near t = 0 where the integrand is steepest
    times = T * (np.arange(1, n_times + 1) / n_times) ** 2
    ker = heat_kernel(surface, (r_x, 0.0), times, modes=0)
    rho = np.asarray(ric(ker.r), dtype=float) * ker.W
    g = ker.coeffs[:, 0, :] @ rho
    ts = np.concatenate([[0.0], times])
    gs = np.concatenate([[float(ric(r_x))], g])
    return float(np.trapezoid(gs, ts))


@dataclass(frozen=True)
class KatoResult:
    T: float
    value: float
    base_points: tuple[float, ...]
    per_point: tuple[float, ...]
    grid_sup: float | None
    refinement_change: float
    method: str

    @property
    def stable(self) -> bool:
        return self.refinement_change <= 0.01


def kato_constant(
    surface: RotationalSurface,
    T: float,
    base_points: Sequence[float] = BASE_POINTS,
    *,
    method: str = "semigroup",
    nodes: int = 3201,
    n_times: int = 40,
    solver: SemigroupSolver | None = None,
    refine: bool = True,
) -> KatoResult:
    """``max`` over ``base_points`` of the space-time integral of ``H Ric_-``.

    ``refine`` repeats the computation on a grid twice as fine (semigroup) or
    with twice the time nodes (kernel) and records the relative change.
    """
    if T <= 0:
        raise ValueError("T must be positive")
    ric = ric_minus(surface)
    pts = tuple(float(p) for p in base_points)
    if method == "semigroup":

        def run(n):
            s = solver if (solver is not None and n == nodes) else solver_for(surface, n)
            prof = _semigroup_profiles(s, ric, [T])[0]
            return np.interp(pts, s.r, prof), float(prof.max())

        vals, grid_sup = run(nodes)
        change = 0.0
        if refine:
            coarse, _ = run((nodes - 1) // 2 + 1)
            change = _rel_change(vals, coarse)
    elif method == "kernel":
        vals = np.array([_kernel_route(surface, ric, p, T, n_times) for p in pts])
        grid_sup = None
        change = 0.0
        if refine:
            fine = np.array([_kernel_route(surface, ric, p, T, 2 * n_times) for p in pts])
            change = _rel_change(fine, vals)
            vals = fine
    else:
        raise ValueError(f"unknown method {method!r}")
    vals = np.asarray(vals, dtype=float)
    return KatoResult(float(T), float(vals.max()), pts, tuple(vals.tolist()), grid_sup, change, method)


def _rel_change(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    scale = max(float(np.max(np.abs(a))), 1e-300)
    return float(np.max(np.abs(a - b)) / scale) if np.any(a) else float(np.max(np.abs(b)))


def kato_profile(
    surface: RotationalSurface,
    times: Sequence[float],
    base_points: Sequence[float] = BASE_POINTS,
    *,
    solver: SemigroupSolver | None = None,
) -> np.ndarray:
    """``max`` over base points of ``k_t`` for each ``t`` (one diagonalization)."""
    solver = solver or solver_for(surface)
    prof = _semigroup_profiles(solver, ric_minus(surface), times)
    return np.array([np.interp(base_points, solver.r, p).max() for p in prof])


def measure_kato_constant(
    surface: RotationalSurface,
    T: float,
    r_x: float = 0.0,
    *,
    n_times: int = 60,
) -> float:
    """``int_0^T int H(t, x, y) dmu_-(y) dt`` for curvature with circles of concentrated mass.

    ``mu_-`` is the negative part of the curvature measure: the absolutely
    continuous density plus the negative circle weights.  Used for singular
    limits, where :func:`ric_minus` refuses.  The time integral is taken in
    ``s = sqrt(t / T)``, which removes the ``t^{-1/2}`` singularity when
    ``x`` sits on a weighted circle.
    """
    meas = curvature_measure(surface)
    s_nodes = np.arange(1, n_times + 1) / n_times
    times = T * s_nodes**2
    ker = heat_kernel(surface, (r_x, 0.0), times, modes=0)
    h0 = ker.coeffs[:, 0, :]
    bps = set(surface.breakpoints)
    inner = ker.r[1:-1]
    keep = np.array([not any(abs(x - b) < 0.5 * ker.du for b in bps) for x in inner])
    dens = np.zeros(ker.r.size)
    dens[1:-1][keep] = np.maximum(0.0, -np.asarray(surface.gaussian_curvature(inner[keep]), dtype=float))
    g = h0 @ (dens * ker.W)
    for rj, w in meas.singular_parts:
        if w < 0 and ker.u[0] < float(surface.u_of_r(rj)) < ker.u[-1]:
            uj = float(surface.u_of_r(rj))
            g = g + (-w) * np.array([np.interp(uj, ker.u, row) for row in h0])
    # integrand in s is 2 T s g(T s^2); extrapolate its value at s = 0
    f = 2 * T * s_nodes * g
    f0 = 2 * f[0] - f[1]
    return float(np.trapezoid(np.concatenate([[f0], f]), np.concatenate([[0.0], s_nodes])))


@dataclass(frozen=True)
class ScalingReport:
    T: np.ndarray
    k: np.ndarray
    a: float
    b: float
    residual: float
    sup_ratio: float
    tolerance: float

    @property
    def flagged(self) -> bool:
        return not self.residual <= self.tolerance

    def fitted(self, t):
        t = np.asarray(t, dtype=float)
        return self.a * np.sqrt(t) + self.b * t

    def as_dict(self) -> dict:
        return {
            "T": self.T.tolist(),
            "k_T": self.k.tolist(),
            "a": self.a,
            "b": self.b,
            "residual": self.residual,
            "sup_k_over_sqrtT": self.sup_ratio,
            "flagged": self.flagged,
        }


def fit_sqrt_linear(T, k) -> tuple[float, float, float]:
    """Nonnegative least squares ``k ~ a sqrt(T) + b T``; returns ``(a, b, relative residual)``."""
    T = np.asarray(T, dtype=float)
    k = np.asarray(k, dtype=float)
    A = np.stack([np.sqrt(T), T], axis=1)
    (a, b), _ = nnls(A, k)
    norm = float(np.linalg.norm(k))
    res = float(np.linalg.norm(A @ [a, b] - k) / norm) if norm > 0 else 0.0
    return float(a), float(b), res


def kato_scaling_report(
    surface: RotationalSurface,
    T_grid: Sequence[float] = SCALING_TIMES,
    base_points: Sequence[float] = BASE_POINTS,
    *,
    tolerance: float = 0.05,
    solver: SemigroupSolver | None = None,
) -> ScalingReport:
    T = np.asarray(sorted(float(t) for t in T_grid))
    k = kato_profile(surface, T, base_points, solver=solver)
    a, b, res = fit_sqrt_linear(T, k)
    return ScalingReport(T, k, a, b, res, float(np.max(k / np.sqrt(T))), tolerance)


# ---------------------------------------------------------------------------
# Ball volumes
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BallVolume:
    value: float
    refined: float | None
    change: float
    method: str

    @property
    def stable(self) -> bool:
        return self.change <= 0.01


def _ball_volume_once(surface, center, radius, per_radius: int) -> tuple[float, str]:
    r_c = float(center[0])
    B_c = float(surface.B(r_c))
    du = radius / (per_radius * B_c)
    u = kernel_window(surface, r_c, 1.25 * radius, du)
    B_u = np.asarray(surface.conformal_scale(u), dtype=float)
    # theta resolution from the widest row: the ball may wrap around thin circles
    n_theta = int(min(max(256, math.ceil(TWO_PI * per_radius * float(B_u.max()) / radius)), 8192))
    theta = TWO_PI * np.arange(n_theta) / n_theta
    df = distance_field(surface, center, u, theta)
    return ball_volume_from_field(df, B_u, radius), df.method


def ball_volume(
    surface: RotationalSurface,
    center: tuple[float, float],
    radius: float,
    *,
    per_radius: int = 40,
    refine: bool = True,
) -> BallVolume:
    """Area of the metric ball, integrated over the distance field on a conformal grid.

    ``per_radius`` is the number of grid steps across one radius near the
    center.  With ``refine`` the computation is repeated at double resolution
    and the finer value is returned.
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    v, method = _ball_volume_once(surface, center, radius, per_radius)
    if not refine:
        return BallVolume(v, None, 0.0, method)
    v2, _ = _ball_volume_once(surface, center, radius, 2 * per_radius)
    return BallVolume(v2, v2, abs(v2 - v) / v2, method)


# ---------------------------------------------------------------------------
# Families and the certificate
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FamilyMember:
    eps: float
    surface: RotationalSurface = field(repr=False)
    sup_deviation: float


@dataclass(frozen=True)
class KatoFamily:
    """Smooth metrics ``g_eps`` approximating ``reference``.

    ``sup_deviation`` of a member is ``sup |f_eps - f|`` for the conformal
    factors relative to ``reference``; ``L`` bounds every factor.
    """

    name: str
    members: tuple[FamilyMember, ...]
    reference: RotationalSurface = field(repr=False)
    base: WarpedMetric = field(repr=False)
    L: float
    origin: tuple[float, float] = (0.0, 0.0)

    @property
    def eps(self) -> tuple[float, ...]:
        return tuple(m.eps for m in self.members)


def family_from_smoothing(smoothing: SmoothingFamily, name: str = "paper") -> KatoFamily:
    ref = ConformalSurface(smoothing.base, smoothing.factor, L=smoothing.L, lam=smoothing.lam, label="")
    if smoothing.factor.name == "paper-factor" and smoothing.base.profile.name == "paper-base":
        ref = paper_conformal_surface(smoothing.base.r_max)
    members = tuple(FamilyMember(m.eps, m.surface, m.sup_deviation) for m in smoothing.members)
    return KatoFamily(name, members, ref, smoothing.base, smoothing.L)


def paper_family(eps_list: Sequence[float] = (0.1, 0.05, 0.025)) -> KatoFamily:
    base = paper_base_metric()
    sm = smooth_conformal_factor(base, paper_factor_field(), eps_list, L=math.log(2.0), lam=1.0, kappa=1.0, K=0.0)
    return family_from_smoothing(sm, "paper")


def constant_family(eps_list: Sequence[float] = (0.1, 0.05, 0.025)) -> KatoFamily:
    """An already smooth metric approximated by itself."""
    base = paper_base_metric()
    members = tuple(FamilyMember(float(e), base, 0.0) for e in eps_list)
    return KatoFamily("constant", members, base, base, 0.0)


def collapsed_family(eps_list: Sequence[float] = (0.1, 0.05, 0.025), delta: float = 0.01) -> KatoFamily:
    """The heat-smoothed family with every circle shrunk by ``delta``."""
    paper = paper_family(eps_list)
    members = []
    for m in paper.members:
        s = m.surface
        members.append(FamilyMember(m.eps, ConformalSurface(s.base.scaled(delta), s.factor, label=f"{s.name}*{delta:g}"), m.sup_deviation))
    return KatoFamily(f"collapsed-{delta:g}", tuple(members), paper.reference, paper.base, paper.L)


@dataclass(frozen=True)
class CertifyConfig:
    T: float = 0.25
    t_grid: tuple[float, ...] = (1e-3, 4e-3, 1.6e-2, 6.4e-2, 0.25)
    base_points: tuple[float, ...] = BASE_POINTS
    n_pairs: int = 6
    pair_extent: float = 1.5
    seed: int = 0
    nodes: int = 3201
    volume_slack: float = 0.01
    envelope_slack: float = 0.25
    monotone_tol: float = 1e-6


@dataclass
class KatoCertificate:
    family: str
    eps: tuple[float, ...]
    T: float
    t_grid: tuple[float, ...]
    a: float
    b: float
    control_integral: float
    envelope_inflation: float
    kato_table: dict[float, list[float]]
    volume_floor: float
    coarse_volume_floor: float
    volumes: dict[float, float]
    volume_floors: dict[float, float]
    pairs: np.ndarray = field(repr=False)
    diameter: float = 0.0
    distance_defects: dict[float, float] = field(default_factory=dict)
    distance_bounds: dict[float, float] = field(default_factory=dict)
    components: dict[str, bool] = field(default_factory=dict)
    failures: list[str] = field(default_factory=list)
    timings: dict[str, float] = field(default_factory=dict)

    @property
    def verdict(self) -> str:
        return "PASS" if all(self.components.values()) else "FAIL"

    def control(self, t):
        t = np.asarray(t, dtype=float)
        return self.a * np.sqrt(t) + self.b * t

    def as_dict(self) -> dict:
        return {
            "family": self.family,
            "verdict": self.verdict,
            "components": self.components,
            "failures": self.failures,
            "T": self.T,
            "control": {
                "a": self.a,
                "b": self.b,
                "integral_f_over_t": self.control_integral,
                "envelope_inflation": self.envelope_inflation,
            },
            "volume": {
                "floor_v": self.volume_floor,
                "coarse_floor_v": self.coarse_volume_floor,
            },
            "distance": {"sample_diameter": self.diameter, "pairs": self.pairs.tolist()},
            "members": [
                {
                    "eps": e,
                    "t": list(self.t_grid),
                    "k_t": self.kato_table[e],
                    "f_t": self.control(self.t_grid).tolist(),
                    "volume_over_T": self.volumes[e],
                    "volume_floor_over_T": self.volume_floors[e],
                    "distance_defect": self.distance_defects.get(e),
                    "distance_bound": self.distance_bounds.get(e),
                }
                for e in self.eps
            ],
            "timings": self.timings,
        }

    def to_json(self, path: str | Path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.as_dict(), indent=2))
        return path

    def to_csv(self, path: str | Path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["eps", "T", "k_T"])
            for e in self.eps:
                for t, k in zip(self.t_grid, self.kato_table[e]):
                    w.writerow([repr(float(e)), repr(float(t)), repr(float(k))])
        return path


def _sample_points(n: int, extent: float, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return np.stack([rng.uniform(-extent, extent, 2 * n), rng.uniform(0.0, TWO_PI, 2 * n)], axis=1)


def _reference_distance(surface: RotationalSurface, p, q) -> float:
    chart = hat_chart(surface)
    if chart is not None:
        t_of_r = chart[0]
        return float(hat_distance((float(t_of_r(p[0])), p[1]), (float(t_of_r(q[0])), q[1])))
    return distance(surface, tuple(p), tuple(q))


def certify_strong_kato_limit(
    family: KatoFamily | SmoothingFamily,
    config: CertifyConfig | None = None,
) -> KatoCertificate:
    """Check uniform Kato control, a uniform volume floor and the distance proxy.

    Control: every measured ``k_t`` (max over base points) lies below one
    ``f(t) = a sqrt(t) + b t``; ``(a, b)`` is the nonnegative fit of the
    pointwise max over the family, scaled up just enough to be an envelope, and the component fails when the
    scaling exceeds ``1 + envelope_slack``.

    Volume: each member satisfies ``vol(B(o, sqrt T)) >= v_eps T`` with
    ``v_eps = e^{-2 d} vol_ref(B(o, e^{-d} sqrt T)) / T`` and ``d`` the
    member's factor deviation, minus ``volume_slack``.  These floors are
    bounded below by the reference value, so one ``v`` works for the family.

    Distance: on every pair of a fixed sample ``|d_eps - d_ref| <= (e^d - 1) d_ref``,
    and ``sup |d_eps - d_ref|`` does not increase as ``eps`` decreases.
    """
    cfg = config or CertifyConfig()
    if isinstance(family, SmoothingFamily):
        family = family_from_smoothing(family)
    members = sorted(family.members, key=lambda m: -m.eps)
    eps = tuple(m.eps for m in members)
    tg = tuple(sorted(cfg.t_grid))
    failures: list[str] = []
    timings: dict[str, float] = {}

    # (a) Kato control
    t0 = time.perf_counter()
    table = {m.eps: kato_profile(m.surface, tg, cfg.base_points, solver=solver_for(m.surface, cfg.nodes)).tolist() for m in members}
    all_t = np.asarray(tg)
    all_k = np.max([table[e] for e in eps], axis=0)
    a, b, _ = fit_sqrt_linear(all_t, all_k)
    f_vals = a * np.sqrt(all_t) + b * all_t
    if np.any(all_k > 0) and np.all(f_vals[all_k > 0] > 0):
        inflation = float(max(1.0, np.max(all_k / np.where(f_vals > 0, f_vals, np.inf))))
    elif np.any(all_k > 0):
        inflation = math.inf
    else:
        inflation = 1.0
    if math.isfinite(inflation):
        a *= inflation
        b *= inflation
    integral = 2 * a * math.sqrt(cfg.T) + b * cfg.T
    ok_kato = math.isfinite(integral) and inflation <= 1.0 + cfg.envelope_slack
    if not ok_kato:
        failures.append(f"kato: envelope inflation {inflation:.3g} exceeds {1 + cfg.envelope_slack:.3g}")
    timings["kato"] = time.perf_counter() - t0

    # (b) volume floor
    t0 = time.perf_counter()
    o = family.origin
    rho = math.sqrt(cfg.T)
    volumes, floors = {}, {}
    ref_cache: dict[float, float] = {}
    for m in members:
        d = m.sup_deviation
        if d not in ref_cache:
            ref_cache[d] = ball_volume(family.reference, o, math.exp(-d) * rho).value
        floors[m.eps] = (1 - cfg.volume_slack) * math.exp(-2 * d) * ref_cache[d] / cfg.T
        volumes[m.eps] = ball_volume(m.surface, o, rho).value / cfg.T
    v = min(floors.values())
    bad = [e for e in eps if volumes[e] < floors[e]]
    ok_vol = v > 0 and not bad
    for e in bad:
        failures.append(f"volume: eps={e:g} has vol/T {volumes[e]:.4g} below floor {floors[e]:.4g}")
    L = family.L
    coarse = math.exp(-2 * L) * ball_volume(family.base, o, math.exp(-L) * rho).value / cfg.T
    timings["volume"] = time.perf_counter() - t0

    # (c) distance proxy
    t0 = time.perf_counter()
    pts = _sample_points(cfg.n_pairs, cfg.pair_extent, cfg.seed)
    pairs = np.concatenate([pts[0::2], pts[1::2]], axis=1)
    ref = family.reference
    ref_d = np.array([_reference_distance(ref, pr[:2], pr[2:]) for pr in pairs])
    diam = float(ref_d.max())
    defects, bounds = {}, {}
    seen: dict[int, np.ndarray] = {id(ref): ref_d}
    ok_dist = True
    for m in members:
        if id(m.surface) not in seen:
            seen[id(m.surface)] = np.array([distance(m.surface, tuple(pr[:2]), tuple(pr[2:])) for pr in pairs])
        gap = np.abs(seen[id(m.surface)] - ref_d)
        # bilipschitz comparison, pair by pair
        allowed = (math.exp(m.sup_deviation) - 1.0) * ref_d
        defects[m.eps] = float(gap.max())
        bounds[m.eps] = float(allowed.max())
        if np.any(gap > allowed + cfg.monotone_tol):
            ok_dist = False
            failures.append(f"distance: eps={m.eps:g} defect {float((gap - allowed).max()):.4g} above the bilipschitz bound")
    for e1, e2 in zip(eps[:-1], eps[1:]):
        if defects[e2] > defects[e1] + cfg.monotone_tol:
            ok_dist = False
            failures.append(f"distance: defect grows from eps={e1:g} to eps={e2:g}")
    timings["distance"] = time.perf_counter() - t0

    return KatoCertificate(
        family=family.name,
        eps=eps,
        T=cfg.T,
        t_grid=tg,
        a=float(a),
        b=float(b),
        control_integral=float(integral),
        envelope_inflation=inflation,
        kato_table=table,
        volume_floor=float(v),
        coarse_volume_floor=float(coarse),
        volumes=volumes,
        volume_floors=floors,
        pairs=pairs,
        diameter=float(diam),
        distance_defects=defects,
        distance_bounds=bounds,
        components={"kato_control": bool(ok_kato), "volume": bool(ok_vol), "distance": bool(ok_dist)},
        failures=failures,
        timings=timings,
    )

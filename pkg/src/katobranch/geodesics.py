"""Geodesics, distances and the branching certificate.

Points are ``(r, theta)`` pairs in the surface's own coordinates.  Three
distance back ends are dispatched on the surface:

* the hat surface (and its conformal form over the base metric) uses the
  exact taut-string formula in each sheet and a one-dimensional minimization
  over the seam crossing for points on opposite sheets;
* the flat cylinder uses the unrolled Euclidean formula;
* every other rotational surface uses shooting with the Clairaut system.

:func:`mesh_dijkstra_distance` is an independent graph oracle and
:func:`distance_field` gives distances from one source to a whole grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import optimize, sparse
from scipy.integrate import solve_ivp
from scipy.sparse import csgraph

from .geometry import (
    ConformalSurface,
    GeometryError,
    RotationalSurface,
    WarpedMetric,
    hat_coordinate,
    hat_coordinate_inverse,
)
from .paths import BoundaryArc, GeodesicPath, IntegratedArc, LineArc, MappedArc, PlanarChord

TWO_PI = 2.0 * math.pi
DEFAULT_TOL = 1e-6
SNAP_ANGLE = 1e-7

Point = tuple[float, float]


class GeodesicError(RuntimeError):
    """Raised when a geodesic computation cannot produce a trustworthy answer."""


def wrap_angle(a):
    """Representative of ``a`` in ``[-pi, pi)``."""
    return (np.asarray(a, dtype=float) + math.pi) % TWO_PI - math.pi


# ---------------------------------------------------------------------------
# Surface classification
# ---------------------------------------------------------------------------


def hat_chart(surface: RotationalSurface) -> tuple[Callable, Callable] | None:
    """``(t_of_r, r_of_t)`` if the surface is isometric to the hat surface, else ``None``."""
    if isinstance(surface, WarpedMetric) and surface.profile.name == "paper-hat":
        ident = lambda x: np.asarray(x, dtype=float)  # noqa: E731
        return ident, ident
    if (
        isinstance(surface, ConformalSurface)
        and surface.base.profile.name == "paper-base"
        and surface.factor.name == "paper-factor"
    ):
        return hat_coordinate, hat_coordinate_inverse
    return None


def _is_flat(surface: RotationalSurface) -> bool:
    return isinstance(surface, WarpedMetric) and surface.profile.name == "flat-cylinder"


# ---------------------------------------------------------------------------
# Integration of the geodesic equations
# ---------------------------------------------------------------------------


def direction_from_angle(surface: RotationalSurface, r: float, psi: float) -> tuple[float, float]:
    """Unit coordinate velocity making angle ``psi`` with the outward meridian."""
    return math.cos(psi) / float(surface.A(r)), math.sin(psi) / float(surface.B(r))


def angle_from_direction(surface: RotationalSurface, r: float, direction: Sequence[float], normalize: bool = True) -> float:
    vr, vth = map(float, direction)
    a, b = float(surface.A(r)), float(surface.B(r))
    norm = math.hypot(a * vr, b * vth)
    if norm == 0.0:
        raise ValueError("direction must be non-zero")
    if not normalize and abs(norm - 1.0) > 1e-6:
        raise ValueError(f"direction has metric norm {norm}, expected 1")
    return math.atan2(b * vth, a * vr)


def integrate_geodesic(
    surface: RotationalSurface,
    start: Point,
    direction: Sequence[float] | None = None,
    length: float = 1.0,
    *,
    psi: float | None = None,
    rtol: float = 1e-10,
    atol: float = 1e-12,
    snap_angle: float = SNAP_ANGLE,
    label: str = "",
) -> GeodesicPath:
    """Integrate a unit-speed geodesic from ``start``.

    The state is ``(r, theta, psi)`` with ``psi`` the angle to the outward
    meridian, so that ``A r' = cos psi``, ``B theta' = sin psi`` and
    ``psi' = -B' sin psi / (A B)``.  Breakpoint circles stop the integrator
    and it restarts on the far side with the one-sided derivative there.
    Reaching a breakpoint circle (or starting on one) with ``|cos psi|`` below
    ``snap_angle`` continues along that circle.  Leaving the truncated domain
    returns a path flagged ``truncated``.
    """
    r, th = float(start[0]), float(start[1])
    if not (surface.r_min <= r <= surface.r_max):
        raise GeometryError(f"start r={r} outside the domain [{surface.r_min}, {surface.r_max}]")
    if psi is None:
        if direction is None:
            raise ValueError("give either direction or psi")
        psi = angle_from_direction(surface, r, direction)
    psi = float(psi)
    bps = [b for b in surface.breakpoints if surface.r_min < b < surface.r_max]
    arcs: list = []
    done = 0.0
    truncated = False
    length = float(length)

    while length - done > 1e-14:
        on_bp = next((b for b in bps if abs(r - b) <= 1e-12 * (1.0 + abs(b))), None)
        if on_bp is not None and abs(math.cos(psi)) < snap_angle:
            rad = float(surface.B(on_bp))
            sgn = 1.0 if math.sin(psi) >= 0 else -1.0
            arcs.append(BoundaryArc(float(on_bp), th, th + sgn * (length - done) / rad, rad))
            break
        side = 1 if math.cos(psi) >= 0 else -1
        if on_bp is not None:
            r = on_bp + side * 1e-13 * (1.0 + abs(on_bp))

        def rhs(_s, y, side=side):
            a = float(surface.A(y[0]))
            b = float(surface.B(y[0]))
            db = float(surface.dB(y[0], side))
            sp, cp = math.sin(y[2]), math.cos(y[2])
            return [cp / a, sp / b, -db * sp / (a * b)]

        events = []
        for b in bps:
            ev = lambda _s, y, b=b: y[0] - b  # noqa: E731
            ev.terminal = True
            events.append(ev)
        n_bp = len(events)
        for edge in (surface.r_min, surface.r_max):
            if np.isfinite(edge):
                ev = lambda _s, y, e=edge: y[0] - e  # noqa: E731
                ev.terminal = True
                events.append(ev)

        sol = solve_ivp(
            rhs, (0.0, length - done), [r, th, psi], method="RK45", rtol=rtol, atol=atol, dense_output=True, events=events
        )
        if not sol.success:
            raise GeodesicError(sol.message)
        if sol.status == 1 and sol.t.size >= 2:
            # the event state comes from the dense interpolant; redo the last partial step tightly
            fix = solve_ivp(rhs, (sol.t[-2], sol.t[-1]), sol.y[:, -2], method="RK45", rtol=1e-13, atol=1e-14)
            sol.y[:, -1] = fix.y[:, -1]
        if sol.t[-1] > 0.0:
            arcs.append(IntegratedArc(sol.t, sol.y[0], sol.y[1], sol.y[2], sol.sol))
        done += float(sol.t[-1])
        r, th, psi = (float(v) for v in sol.y[:, -1])
        if sol.status == 1:
            hit = next(i for i, te in enumerate(sol.t_events) if te.size)
            if hit >= n_bp:
                truncated = True
                break
            r = float(bps[hit])
    return GeodesicPath(tuple(arcs), truncated, label)


def clairaut_drift(surface: RotationalSurface, path: GeodesicPath) -> float:
    """Largest change of ``B(r) sin psi`` along the integrated arcs.

    Relative to the initial value when that exceeds 1, absolute otherwise.
    """
    vals = []
    for arc in path.arcs:
        if isinstance(arc, IntegratedArc):
            vals.append(np.asarray(surface.B(arc.r)) * np.sin(arc.psi))
    if not vals:
        return 0.0
    c = np.concatenate(vals)
    return float(np.max(np.abs(c - c[0])) / max(1.0, abs(c[0])))


# ---------------------------------------------------------------------------
# The hat surface: taut strings outside the unit disk
# ---------------------------------------------------------------------------


def taut_length(rho_p, rho_q, angle):
    """Length of the shortest path outside the open unit disk.

    Endpoints at radii ``rho_p, rho_q >= 1`` separated by ``angle`` in
    ``[0, pi]``.  Vectorized.
    """
    rho_p = np.asarray(rho_p, dtype=float)
    rho_q = np.asarray(rho_q, dtype=float)
    angle = np.asarray(angle, dtype=float)
    ap = np.arccos(np.clip(1.0 / rho_p, -1.0, 1.0))
    aq = np.arccos(np.clip(1.0 / rho_q, -1.0, 1.0))
    chord = np.sqrt(np.maximum(rho_p**2 + rho_q**2 - 2.0 * rho_p * rho_q * np.cos(angle), 0.0))
    wrapped = np.sqrt(np.maximum(rho_p**2 - 1.0, 0.0)) + np.sqrt(np.maximum(rho_q**2 - 1.0, 0.0)) + angle - ap - aq
    out = np.where(angle <= ap + aq, chord, wrapped)
    return out if out.ndim else float(out)


def _taut_arcs(rho_p: float, th_p: float, rho_q: float, th_q: float, sheet: int) -> list:
    """Arcs of the taut path; ``th_q`` is unwrapped so that ``|th_q - th_p| <= pi``."""
    d = th_q - th_p
    sgn = 1.0 if d >= 0 else -1.0
    ang = abs(d)
    ap = math.acos(min(1.0, 1.0 / rho_p))
    aq = math.acos(min(1.0, 1.0 / rho_q))
    P = (rho_p * math.cos(th_p), rho_p * math.sin(th_p))
    Q = (rho_q * math.cos(th_q), rho_q * math.sin(th_q))
    if ang <= ap + aq:
        return [PlanarChord(sheet, P, Q, th_p)] if (P != Q) else []
    a1 = th_p + sgn * ap
    a2 = th_q - sgn * aq
    arcs: list = []
    if ap > 0:
        arcs.append(PlanarChord(sheet, P, (math.cos(a1), math.sin(a1)), th_p))
    arcs.append(BoundaryArc(0.0, a1, a2, 1.0))
    if aq > 0:
        arcs.append(PlanarChord(sheet, (math.cos(a2), math.sin(a2)), Q, a2))
    return arcs


def taut_distance_exterior_disk(p: Sequence[float], q: Sequence[float], *, sheet: int = 1) -> tuple[float, GeodesicPath]:
    """Shortest path between planar points outside the open unit disk.

    Returns the length and the path in hat coordinates ``(t, theta)`` on the
    given sheet.  The path is the chord when it clears the disk, otherwise two
    tangent segments joined by an arc of the unit circle.
    """
    px, py = map(float, p)
    qx, qy = map(float, q)
    rp, rq = math.hypot(px, py), math.hypot(qx, qy)
    if rp < 1.0 - 1e-12 or rq < 1.0 - 1e-12:
        raise GeometryError("taut distance needs points with |p| >= 1 and |q| >= 1")
    rp, rq = max(rp, 1.0), max(rq, 1.0)
    th_p = math.atan2(py, px)
    th_q = th_p + float(wrap_angle(math.atan2(qy, qx) - th_p))
    value = float(taut_length(rp, rq, abs(th_q - th_p)))
    return value, GeodesicPath(tuple(_taut_arcs(rp, th_p, rq, th_q, sheet)), False, "taut")


def _sheet(t: float) -> int:
    return 0 if t == 0 else (1 if t > 0 else -1)


def _seam_objective(rho_p, th_p, rho_q, th_q):
    def f(alpha):
        return taut_length(rho_p, 1.0, np.abs(wrap_angle(alpha - th_p))) + taut_length(
            1.0, rho_q, np.abs(wrap_angle(alpha - th_q))
        )

    return f


def _best_seam_angle(rho_p: float, th_p: float, rho_q: float, th_q: float, n_scan: int = 720) -> tuple[float, float]:
    f = _seam_objective(rho_p, th_p, rho_q, th_q)
    alphas = th_p + np.linspace(-math.pi, math.pi, n_scan, endpoint=False)
    vals = f(alphas)
    i = int(np.argmin(vals))
    h = TWO_PI / n_scan
    res = optimize.minimize_scalar(
        lambda a: float(f(a)), bounds=(alphas[i] - h, alphas[i] + h), method="bounded", options={"xatol": 1e-12}
    )
    if res.fun <= vals[i]:
        return float(res.x), float(res.fun)
    return float(alphas[i]), float(vals[i])


def hat_distance(p: Point, q: Point, with_path: bool = False):
    """Distance on the hat surface between ``(t, theta)`` points.

    Same sheet: taut path in that sheet.  Opposite sheets: minimum over the
    seam crossing angle of the two taut lengths.
    """
    tp, thp = float(p[0]), float(p[1])
    tq, thq = float(q[0]), float(q[1])
    rp, rq = 1.0 + abs(tp), 1.0 + abs(tq)
    sp, sq = _sheet(tp), _sheet(tq)
    thq_u = thp + float(wrap_angle(thq - thp))
    if sp * sq >= 0:
        sheet = sp or sq or 1
        d = float(taut_length(rp, rq, abs(thq_u - thp)))
        if not with_path:
            return d
        return d, GeodesicPath(tuple(_taut_arcs(rp, thp, rq, thq_u, sheet)), False, "hat")
    alpha, d = _best_seam_angle(rp, thp, rq, thq)
    if not with_path:
        return d
    a_u = thp + float(wrap_angle(alpha - thp))
    first = _taut_arcs(rp, thp, 1.0, a_u, sp)
    q_u = a_u + float(wrap_angle(thq - a_u))
    second = _taut_arcs(1.0, a_u, rq, q_u, sq)
    return d, GeodesicPath(tuple(first + second), False, "hat")


def hat_distance_many(p: Point, qs: np.ndarray) -> np.ndarray:
    """Hat distances from one point to many; ``qs`` has shape ``(n, 2)``."""
    qs = np.asarray(qs, dtype=float)
    return _hat_distance_rows(float(p[0]), float(p[1]), qs[:, 0], qs[:, 1])


def _hat_distance_rows(tp: float, thp: float, tq: np.ndarray, thq: np.ndarray, n_alpha: int = 720) -> np.ndarray:
    tq = np.asarray(tq, dtype=float)
    thq = np.asarray(thq, dtype=float)
    rp = 1.0 + abs(tp)
    rq = 1.0 + np.abs(tq)
    out = np.asarray(taut_length(rp, rq, np.abs(wrap_angle(thq - thp))), dtype=float).copy()
    opp = (tq * tp) < 0
    if np.any(opp):
        h = TWO_PI / n_alpha
        alphas = thp + np.arange(n_alpha) * h
        head = taut_length(rp, 1.0, np.abs(wrap_angle(alphas - thp)))
        idx = np.nonzero(opp)[0]
        for chunk in np.array_split(idx, max(1, idx.size // 2048)):
            tail = taut_length(1.0, rq[chunk, None], np.abs(wrap_angle(alphas[None, :] - thq[chunk, None])))
            tot = head[None, :] + tail
            k = np.argmin(tot, axis=1)
            # parabolic refinement through the neighbours of the discrete minimum
            rows = np.arange(chunk.size)
            fm = tot[rows, (k - 1) % n_alpha]
            f0 = tot[rows, k]
            fp = tot[rows, (k + 1) % n_alpha]
            den = fm - 2 * f0 + fp
            with np.errstate(divide="ignore", invalid="ignore"):
                shift = np.where(den > 0, 0.5 * (fm - fp) / den, 0.0)
            shift = np.clip(shift, -1.0, 1.0)
            a_star = alphas[k] + shift * h
            refined = taut_length(rp, 1.0, np.abs(wrap_angle(a_star - thp))) + taut_length(
                1.0, rq[chunk], np.abs(wrap_angle(a_star - thq[chunk]))
            )
            out[chunk] = np.minimum(f0, refined)
    return out


# ---------------------------------------------------------------------------
# Shooting on smooth rotational surfaces
# ---------------------------------------------------------------------------


@dataclass
class _Tables:
    r: np.ndarray
    A: np.ndarray
    B: np.ndarray
    dB: np.ndarray


def _tables(surface: RotationalSurface, n: int = 40001) -> _Tables:
    cache = surface.__dict__.setdefault("_geodesic_tables", {})
    if n not in cache:
        r = np.linspace(surface.r_min, surface.r_max, n)
        cache[n] = _Tables(r, np.asarray(surface.A(r), float), np.asarray(surface.B(r), float), np.asarray(surface.dB(r), float))
    return cache[n]


def _rk4_fan(tab: _Tables, r0: float, th0: float, psis: np.ndarray, ds: float, n_steps: int):
    """Fixed-step RK4 for a fan of initial angles; returns ``(R, TH, alive)`` histories."""

    def rhs(r, ps):
        a = np.interp(r, tab.r, tab.A)
        b = np.interp(r, tab.r, tab.B)
        db = np.interp(r, tab.r, tab.dB)
        sp, cp = np.sin(ps), np.cos(ps)
        return cp / a, sp / b, -db * sp / (a * b)

    n = psis.size
    R = np.empty((n_steps + 1, n))
    TH = np.empty((n_steps + 1, n))
    alive = np.ones((n_steps + 1, n), dtype=bool)
    r = np.full(n, r0)
    th = np.full(n, th0)
    ps = psis.astype(float).copy()
    R[0], TH[0] = r, th
    lo, hi = tab.r[0], tab.r[-1]
    for j in range(n_steps):
        k1 = rhs(r, ps)
        k2 = rhs(r + 0.5 * ds * k1[0], ps + 0.5 * ds * k1[2])
        k3 = rhs(r + 0.5 * ds * k2[0], ps + 0.5 * ds * k2[2])
        k4 = rhs(r + ds * k3[0], ps + ds * k3[2])
        r = r + ds / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        th = th + ds / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        ps = ps + ds / 6 * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])
        out = (r < lo) | (r > hi)
        r = np.clip(r, lo, hi)
        R[j + 1], TH[j + 1] = r, th
        alive[j + 1] = alive[j] & ~out
    return R, TH, alive


def _crossings(R, TH, alive, r0: float, rq: float, psis: np.ndarray, ds: float, max_cross: int = 6):
    """Per trajectory: theta and arclength at successive crossings of ``r = rq``."""
    D = R - rq
    D = D.copy()
    if r0 == rq:
        D[0] = -np.sign(np.cos(psis)) * 1e-300
        D[0][D[0] == 0] = -1e-300
    n = psis.size
    th_c = np.full((max_cross, n), np.nan)
    s_c = np.full((max_cross, n), np.nan)
    a, b = D[:-1], D[1:]
    hit = ((a * b < 0) | ((b == 0) & (a != 0))) & alive[1:]
    for i in range(n):
        js = np.nonzero(hit[:, i])[0][:max_cross]
        for c, j in enumerate(js):
            w = a[j, i] / (a[j, i] - b[j, i])
            th_c[c, i] = TH[j, i] + w * (TH[j + 1, i] - TH[j, i])
            s_c[c, i] = (j + w) * ds
    return th_c, s_c


def _upper_bound(surface: RotationalSurface, p: Point, q: Point) -> float:
    """Length of the best meridian / parallel / meridian broken path."""
    rr = np.linspace(surface.r_min, surface.r_max, 4001)
    m = np.asarray(surface.meridian_coordinate(rr))
    mp = float(surface.meridian_coordinate(p[0]))
    mq = float(surface.meridian_coordinate(q[0]))
    dth = abs(float(wrap_angle(q[1] - p[1])))
    cost = np.abs(m - mp) + np.abs(m - mq) + np.asarray(surface.B(rr)) * dth
    direct = abs(mp - mq) + min(float(surface.B(p[0])), float(surface.B(q[0]))) * dth
    return float(min(cost.min(), direct))


@dataclass(frozen=True)
class DistanceResult:
    value: float
    path: GeodesicPath | None = field(repr=False, default=None)
    method: str = ""
    converged: bool = True
    tolerance: float = DEFAULT_TOL


def _end_state(surface, p, psi, L):
    path = integrate_geodesic(surface, p, psi=psi, length=L)
    if path.truncated:
        return None, path
    arc = path.arcs[-1]
    end = path.end
    if isinstance(arc, IntegratedArc):
        psi_end = float(arc.psi[-1])
    else:
        psi_end = math.copysign(math.pi / 2, arc.theta1 - arc.theta0)
    return (float(end[0]), float(end[1]), psi_end), path


def _newton_polish(surface, p, q_r, q_th, psi, L, tol, max_iter: int = 10):
    """Newton on ``(psi, L)`` for the endpoint equations; returns ``(psi, L, residual, path)``."""
    best = None
    for _ in range(max_iter):
        st, path = _end_state(surface, p, psi, L)
        if st is None:
            return None
        r, th, pe = st
        a, b = float(surface.A(r)), float(surface.B(r))
        res = np.array([r - q_r, th - q_th])
        resn = math.hypot(a * res[0], b * res[1])
        if best is None or resn < best[2]:
            best = (psi, L, resn, path)
        if resn < 1e-3 * tol:
            break
        dpsi = 1e-6
        st2, _ = _end_state(surface, p, psi + dpsi, L)
        if st2 is None:
            return best
        J = np.array(
            [[(st2[0] - r) / dpsi, math.cos(pe) / a], [(st2[1] - th) / dpsi, math.sin(pe) / b]]
        )
        try:
            step = np.linalg.solve(J, res)
        except np.linalg.LinAlgError:
            break
        psi -= step[0]
        L = max(L - step[1], 1e-12)
    return best


def shooting_distance(
    surface: RotationalSurface,
    p: Point,
    q: Point,
    *,
    tol: float = DEFAULT_TOL,
    n_psi: int = 360,
    golden_iterations: int = 60,
    windings: Sequence[int] = (-1, 0, 1),
) -> DistanceResult:
    """Distance by shooting geodesics from ``p`` towards the circle ``r = r_q``.

    A fan of ``n_psi`` initial angles is integrated with fixed-step RK4 on
    tabulated coefficients.  Sign changes of the angular miss at each crossing
    of ``r = r_q`` (per winding ``k``) bracket the connecting geodesics; each
    bracket is narrowed by golden-section search on the absolute miss and the
    result is polished by Newton iteration with the adaptive integrator.  The
    shortest converged candidate wins.
    """
    p = (float(p[0]), float(p[1]))
    q = (float(q[0]), float(q[1]))
    dth = float(wrap_angle(q[1] - p[1]))
    if p[0] == q[0] and dth == 0.0:
        return DistanceResult(0.0, GeodesicPath((), False, "point"), "shooting")
    L_up = _upper_bound(surface, p, q)
    L_max = 1.05 * L_up + 1e-9
    tab = _tables(surface)
    n_steps = int(np.clip(L_max / 0.01, 200, 1500))
    ds = L_max / n_steps
    psis = np.linspace(-math.pi, math.pi, n_psi, endpoint=False)
    R, TH, alive = _rk4_fan(tab, p[0], p[1], psis, ds, n_steps)
    th_c, s_c = _crossings(R, TH, alive, p[0], q[0], psis, ds)

    brackets = []
    for c in range(th_c.shape[0]):
        for k in windings:
            target = p[1] + dth + TWO_PI * k
            miss = th_c[c] - target
            for i in range(n_psi):
                j = (i + 1) % n_psi
                m0, m1 = miss[i], miss[j]
                if not (np.isfinite(m0) and np.isfinite(m1)):
                    continue
                if m0 == 0 or m0 * m1 < 0:
                    if abs(m0 - m1) < math.pi:
                        lo = psis[i]
                        hi = psis[j] if j else psis[j] + TWO_PI
                        approx = float(min(s_c[c, i], s_c[c, j]))
                        brackets.append((approx, lo, hi, c, target))
    candidates: list[tuple[float, GeodesicPath, float]] = []

    # a parallel circle through p and q is a geodesic exactly when B' vanishes there
    if p[0] == q[0] and abs(float(surface.dB(p[0]))) < 1e-12:
        rad = float(surface.B(p[0]))
        arc = BoundaryArc(p[0], p[1], p[1] + dth, rad)
        candidates.append((rad * abs(dth), GeodesicPath((arc,), False, "parallel"), 0.0))

    if brackets:
        brackets.sort(key=lambda b: b[0])
        cutoff = brackets[0][0] * 1.05 + 1e-3
        brackets = [b for b in brackets if b[0] <= cutoff][:6]
        lo = np.array([b[1] for b in brackets])
        hi = np.array([b[2] for b in brackets])
        cidx = np.array([b[3] for b in brackets])
        targets = np.array([b[4] for b in brackets])
        cols = np.arange(len(brackets))
        # the fan step size is fine enough for bracketing; refine trajectories only up to the candidates
        L_ref = min(L_max, 1.2 * max(b[0] for b in brackets) + 10 * ds)
        n_ref = int(np.clip(L_ref / 0.01, 100, 1500))
        ds_ref = L_ref / n_ref

        def miss_of(ps):
            Rr, THr, al = _rk4_fan(tab, p[0], p[1], ps, ds_ref, n_ref)
            tc, sc = _crossings(Rr, THr, al, p[0], q[0], ps, ds_ref)
            val = tc[cidx, cols] - targets
            return np.where(np.isfinite(val), np.abs(val), np.inf), sc[cidx, cols]

        g = (math.sqrt(5.0) - 1.0) / 2.0
        x1 = hi - g * (hi - lo)
        x2 = lo + g * (hi - lo)
        f1, _ = miss_of(x1)
        f2, _ = miss_of(x2)
        for _ in range(golden_iterations):
            if np.all(hi - lo < 1e-10):
                break
            left = f1 <= f2
            hi = np.where(left, x2, hi)
            lo = np.where(left, lo, x1)
            x1n = np.where(left, hi - g * (hi - lo), x2)
            x2n = np.where(left, x1, lo + g * (hi - lo))
            fv, _ = miss_of(np.where(left, x1n, x2n))
            f1, f2 = np.where(left, fv, f2), np.where(left, f1, fv)
            x1, x2 = x1n, x2n
        psi_star = 0.5 * (lo + hi)
        _, s_star = miss_of(psi_star)
        for i, b in enumerate(brackets):
            if not np.isfinite(s_star[i]):
                continue
            out = _newton_polish(surface, p, q[0], b[4], float(psi_star[i]), float(s_star[i]), tol)
            if out is None:
                continue
            _, L, resn, path = out
            candidates.append((L, path, resn))

    good = [c for c in candidates if c[2] <= tol]
    if good:
        L, path, _ = min(good, key=lambda c: c[0])
        return DistanceResult(float(L), path, "shooting", True, tol)
    value = mesh_dijkstra_distance(surface, p, q)
    return DistanceResult(value, None, "dijkstra-fallback", False, 3 * 0.01)


# ---------------------------------------------------------------------------
# Dispatch
# ---------------------------------------------------------------------------


def _check_point(surface: RotationalSurface, p: Point) -> None:
    if not (surface.r_min - 1e-12 <= float(p[0]) <= surface.r_max + 1e-12):
        raise GeometryError(f"point {tuple(p)} lies outside the domain [{surface.r_min}, {surface.r_max}]")


def shortest_path(surface: RotationalSurface, p: Point, q: Point, *, tol: float = DEFAULT_TOL) -> DistanceResult:
    """Distance between two points together with a minimizing path."""
    _check_point(surface, p)
    _check_point(surface, q)
    chart = hat_chart(surface)
    if chart is not None:
        t_of_r, r_of_t = chart
        tp = (float(t_of_r(p[0])), float(p[1]))
        tq = (float(t_of_r(q[0])), float(q[1]))
        d, path = hat_distance(tp, tq, with_path=True)
        if isinstance(surface, ConformalSurface):
            path = GeodesicPath(tuple(MappedArc(a, r_of_t) for a in path.arcs), False, path.label)
        return DistanceResult(d, path, "taut", True, 1e-12)
    if _is_flat(surface):
        dth = float(wrap_angle(q[1] - p[1]))
        scale = float(surface.B(0.0))
        d = math.hypot(float(q[0]) - float(p[0]), scale * dth)
        arc = LineArc((float(p[0]), float(p[1])), (float(q[0]), float(p[1]) + dth), d)
        return DistanceResult(d, GeodesicPath((arc,), False, "flat"), "flat", True, 1e-12)
    return shooting_distance(surface, p, q, tol=tol)


def distance(surface: RotationalSurface, p: Point, q: Point, *, tol: float = DEFAULT_TOL) -> float:
    """Riemannian distance between ``p`` and ``q``."""
    return shortest_path(surface, p, q, tol=tol).value


# ---------------------------------------------------------------------------
# Graph oracle
# ---------------------------------------------------------------------------


def _primitive_offsets(m: int) -> list[tuple[int, int]]:
    out = [(0, 1)]
    for a in range(1, m + 1):
        for b in range(-m, m + 1):
            if math.gcd(a, abs(b)) == 1:
                out.append((a, b))
    return out


def mesh_dijkstra_distance(
    surface: RotationalSurface,
    p: Point,
    q: Point,
    h: float = 0.01,
    *,
    stencil: int = 5,
    margin: float = 1.0,
) -> float:
    """Shortest path in a grid graph over ``(r, theta)``; an independent oracle.

    Nodes sit on a grid of step about ``h`` in both coordinates, anchored so
    that ``p`` and the radial coordinate of ``q`` are nodes.  Each node links to
    all nodes reached by primitive offsets of size at most ``stencil``, so
    straight-line paths are resolved up to the angular gap of the stencil.
    Edge weights are metric lengths of the coordinate segments by 6-point
    Gauss-Legendre quadrature.  The radial window covers both points plus
    ``margin``.  The graph distance overestimates the true one.
    """
    _check_point(surface, p)
    _check_point(surface, q)
    rp, thp = float(p[0]), float(p[1])
    rq, thq = float(q[0]), float(q[1])
    lo = max(min(rp, rq) - margin, surface.r_min)
    hi = min(max(rp, rq) + margin, surface.r_max)
    dr = rq - rp
    hr = abs(dr) / max(1, round(abs(dr) / h)) if dr != 0 else h
    j_lo = math.ceil((lo - rp) / hr - 1e-9)
    j_hi = math.floor((hi - rp) / hr + 1e-9)
    r = rp + hr * np.arange(j_lo, j_hi + 1)
    nr = r.size
    i_p = -j_lo
    i_q = int(round((rq - rp) / hr)) - j_lo

    # choose the angular resolution that puts q closest to a node
    dth = float(wrap_angle(thq - thp)) % TWO_PI
    n0 = int(round(TWO_PI / h))
    best = None
    for n in range(int(0.9 * n0), int(1.1 * n0) + 1):
        k = dth / (TWO_PI / n)
        err = abs(k - round(k))
        if best is None or err < best[0] - 1e-12:
            best = (err, n)
    n_th = best[1]
    hth = TWO_PI / n_th
    k_q = int(round(dth / hth)) % n_th

    gx, gw = np.polynomial.legendre.leggauss(6)
    gs, gw = (gx + 1) / 2, gw / 2
    rows, cols, vals = [], [], []
    node = np.arange(nr * n_th).reshape(nr, n_th)
    for a, b in _primitive_offsets(stencil):
        if a >= nr:
            continue
        r0 = r[: nr - a]
        r1 = r[a:]
        rr = r0[:, None] + (r1 - r0)[:, None] * gs
        da = np.asarray(surface.A(rr)) * (a * hr)
        db = np.asarray(surface.B(rr)) * (b * hth)
        w = (np.sqrt(da * da + db * db) * gw).sum(-1)
        src = node[: nr - a]
        dst = node[a:][:, (np.arange(n_th) + b) % n_th]
        rows.append(src.ravel())
        cols.append(dst.ravel())
        vals.append(np.repeat(w, n_th))
    G = sparse.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(nr * n_th, nr * n_th)
    )
    dist = csgraph.dijkstra(G, directed=False, indices=int(node[i_p, 0]))
    return float(dist[node[i_q, k_q]])


# ---------------------------------------------------------------------------
# Distance fields on the conformal grid
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DistanceField:
    """Distances from ``source`` to every node of a ``(u, theta)`` grid."""

    source: Point
    u: np.ndarray = field(repr=False)
    theta: np.ndarray = field(repr=False)
    r: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)
    method: str = ""


def distance_field(
    surface: RotationalSurface,
    source: Point,
    u: np.ndarray,
    theta: np.ndarray,
    *,
    method: str = "auto",
) -> DistanceField:
    """Distance from ``source`` to all nodes ``(u_i, theta_j)`` of the conformal grid.

    ``u`` must be uniform; ``theta`` must be the uniform periodic grid
    ``2 pi j / n``.  Exact formulas are used for the hat surface and the flat
    cylinder; otherwise the eikonal equation ``|grad d| = B`` in the conformal
    chart is solved by second-order fast marching, started from the exact
    local distance on a small disk around the source.
    """
    u = np.asarray(u, dtype=float)
    theta = np.asarray(theta, dtype=float)
    r = np.asarray(surface.r_of_u(u), dtype=float)
    chart = hat_chart(surface)
    if method == "auto":
        method = "hat" if chart is not None else ("flat" if _is_flat(surface) else "fmm")
    if method == "hat":
        t_of_r, _ = chart
        tp = float(t_of_r(source[0]))
        tg = np.asarray(t_of_r(r))
        T, TH = np.meshgrid(tg, theta, indexing="ij")
        vals = _hat_distance_rows(tp, float(source[1]), T.ravel(), TH.ravel()).reshape(T.shape)
    elif method == "flat":
        scale = float(surface.B(0.0))
        R, TH = np.meshgrid(r, theta, indexing="ij")
        vals = np.hypot(R - float(source[0]), scale * wrap_angle(TH - float(source[1])))
    elif method == "fmm":
        vals = _fmm_field(surface, source, u, theta)
    else:
        raise ValueError(f"unknown distance field method {method!r}")
    return DistanceField((float(source[0]), float(source[1])), u, theta, r, vals, method)


def _fmm_field(surface: RotationalSurface, source: Point, u: np.ndarray, theta: np.ndarray, rho0: float = 2.0) -> np.ndarray:
    import skfmm

    du = float(u[1] - u[0])
    dth = float(theta[1] - theta[0])
    ux = float(surface.u_of_r(source[0]))
    bx = float(surface.B(source[0]))
    U, TH = np.meshgrid(u, theta, indexing="ij")
    coord = np.hypot(U - ux, wrap_angle(TH - float(source[1])))
    phi = coord - rho0 * max(du, dth)
    B = np.asarray(surface.conformal_scale(u), dtype=float)[:, None] * np.ones_like(U)
    tt = skfmm.travel_time(phi, 1.0 / B, dx=[du, dth], periodic=[False, True], order=2)
    tt = np.asarray(np.ma.filled(tt, np.nan))
    inside = phi <= 0
    out = tt + bx * rho0 * max(du, dth)
    out[inside] = bx * coord[inside]
    return out


# ---------------------------------------------------------------------------
# Branching certificate
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BranchCertificate:
    trunk: GeodesicPath = field(repr=False)
    branch: GeodesicPath = field(repr=False)
    split_parameter: float
    agreement_defect: float
    divergence: float
    minimality_defects: tuple[float, float]
    tolerance: float
    agreement_tolerance: float
    min_divergence: float
    failures: tuple[str, ...] = ()

    @property
    def certified(self) -> bool:
        return not self.failures

    def as_dict(self) -> dict:
        return {
            "certified": self.certified,
            "split_parameter": self.split_parameter,
            "agreement_defect": self.agreement_defect,
            "divergence": self.divergence,
            "minimality_defects": list(self.minimality_defects),
            "tolerance": self.tolerance,
            "agreement_tolerance": self.agreement_tolerance,
            "min_divergence": self.min_divergence,
            "failures": list(self.failures),
        }


def seam_trunk(length: float = math.pi) -> GeodesicPath:
    """The seam arc ``s -> (0, s)`` on ``[0, length]``."""
    return GeodesicPath((BoundaryArc(0.0, 0.0, length, 1.0),), False, "trunk")


def tangent_branch(split: float = math.pi / 2, length: float = math.pi, sheet: int = 1) -> GeodesicPath:
    """Seam arc up to ``split``, then the tangent half-line into the given sheet."""
    start = (math.cos(split), math.sin(split))
    tangent = (-math.sin(split), math.cos(split))
    u = length - split
    end = (start[0] + u * tangent[0], start[1] + u * tangent[1])
    arcs = (BoundaryArc(0.0, 0.0, split, 1.0), PlanarChord(sheet, start, end, split))
    return GeodesicPath(arcs, False, "branch")


def kinked_branch(split: float, turn: float, length: float = math.pi, sheet: int = 1) -> GeodesicPath:
    """Seam arc to ``split``, then a half-line turned ``turn`` radians away from the tangent."""
    start = (math.cos(split), math.sin(split))
    tangent = np.array([-math.sin(split), math.cos(split)])
    outward = np.array(start)
    d = math.cos(turn) * tangent + math.sin(turn) * outward
    u = length - split
    end = (start[0] + u * d[0], start[1] + u * d[1])
    arcs = (BoundaryArc(0.0, 0.0, split, 1.0), PlanarChord(sheet, start, end, split))
    return GeodesicPath(arcs, False, "kinked")


def certify_branching(
    surface: RotationalSurface,
    trunk: GeodesicPath,
    branch: GeodesicPath,
    c: float,
    tol: float = 1e-3,
    *,
    agreement_tol: float = 1e-6,
    min_divergence: float | None = None,
    n_samples: int = 33,
    distance_fn: Callable[[Point, Point], float] | None = None,
) -> BranchCertificate:
    """Check that two unit-speed paths are minimizing, agree on ``[0, c]`` and then separate.

    Minimality is tested as ``|d(path(0), path(s)) - s| <= tol`` at
    ``n_samples`` parameters of each path, agreement as the largest distance
    between the paths for ``s <= c``, divergence as the distance between the
    endpoints at the common final parameter.
    """
    dist = distance_fn or (lambda a, b: distance(surface, a, b))
    b_end = min(trunk.total_length, branch.total_length)
    if not (0.0 < c < b_end):
        raise ValueError("split parameter must lie strictly inside the common interval")
    min_div = 10 * tol if min_divergence is None else min_divergence
    s_agree = np.linspace(0.0, c, n_samples)
    pt, pb = trunk(s_agree), branch(s_agree)
    agreement = max(dist(tuple(x), tuple(y)) for x, y in zip(pt, pb))
    divergence = dist(tuple(trunk(b_end)), tuple(branch(b_end)))
    mins = []
    for path in (trunk, branch):
        s = np.linspace(0.0, path.total_length, n_samples)[1:]
        pts = path(s)
        o = tuple(path(0.0))
        mins.append(max(abs(dist(o, tuple(x)) - si) for x, si in zip(pts, s)))
    failures = []
    if agreement > agreement_tol:
        failures.append("agreement")
    if not divergence > min_div:
        failures.append("divergence")
    if mins[0] > tol:
        failures.append("trunk-minimality")
    if mins[1] > tol:
        failures.append("branch-minimality")
    return BranchCertificate(
        trunk, branch, float(c), float(agreement), float(divergence), (float(mins[0]), float(mins[1])),
        tol, agreement_tol, min_div, tuple(failures),
    )


# ---------------------------------------------------------------------------
# 1-Lipschitz maps of the hat surface
# ---------------------------------------------------------------------------

HAT_MAPS: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "identity": lambda p: p,
    "fold_plus": lambda p: np.stack([np.abs(p[..., 0]), p[..., 1]], axis=-1),
    "fold_minus": lambda p: np.stack([-np.abs(p[..., 0]), p[..., 1]], axis=-1),
    "seam_projection": lambda p: np.stack([np.zeros_like(p[..., 0]), p[..., 1]], axis=-1),
}


def sample_pairs(n: int = 500, t_max: float = 3.0, seed: int = 0) -> np.ndarray:
    """``n`` random pairs of hat points, shape ``(n, 2, 2)``."""
    rng = np.random.default_rng(seed)
    t = rng.uniform(-t_max, t_max, size=(n, 2))
    th = rng.uniform(0.0, TWO_PI, size=(n, 2))
    return np.stack([t, th], axis=-1)


def lipschitz_check(name: str, pairs: np.ndarray, surface: RotationalSurface | None = None) -> float:
    """Largest ratio ``d(F p, F q) / d(p, q)`` over the sampled pairs."""
    fmap = HAT_MAPS[name]
    dist = (lambda a, b: hat_distance(a, b)) if surface is None else (lambda a, b: distance(surface, a, b))
    pairs = np.asarray(pairs, dtype=float)
    img = fmap(pairs)
    worst = 0.0
    for (p, q), (fp, fq) in zip(pairs, img):
        d = dist(tuple(p), tuple(q))
        if d <= 1e-12:
            continue
        worst = max(worst, dist(tuple(fp), tuple(fq)) / d)
    return float(worst)

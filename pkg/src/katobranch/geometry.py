"""Rotationally symmetric surfaces, conformal deformations and their curvature.

Every surface here is a metric on a band of the cylinder ``R x (R / 2 pi Z)``
of the form ``A(r)^2 dr^2 + B(r)^2 dtheta^2``.  Warped products
``dt^2 + phi(t)^2 dtheta^2`` have ``A = 1``; a conformal deformation
``e^{2f} g0`` of a warped base has ``A = e^f`` and ``B = e^f phi0``.

All of them share a conformal chart ``u = int A/B dr`` in which the metric
reads ``B(u)^2 (du^2 + dtheta^2)``; the heat solver and the eikonal distance
fields work in that chart.

Sign conventions: ``K`` is the Gaussian curvature (``Ric = K g``) and
``laplacian`` is the non-negative operator ``-div grad`` so that the heat
semigroup is ``exp(-t laplacian)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np
from scipy import integrate
from scipy.interpolate import CubicSpline

Func = Callable[[np.ndarray], np.ndarray]

TWO_PI = 2.0 * math.pi


class GeometryError(ValueError):
    """Raised when a geometric quantity is requested where it does not exist."""


# ---------------------------------------------------------------------------
# Profiles
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ProfilePiece:
    """One smooth closed-form branch of a warp function on ``[lo, hi]``."""

    lo: float
    hi: float
    phi: Func
    dphi: Func
    d2phi: Func


def _one_sided_fd(fn: Func, x: float, h: float, direction: int) -> float:
    # fourth order one-sided stencil
    pts = x + direction * h * np.arange(5)
    v = np.asarray(fn(pts), dtype=float)
    coef = np.array([-25.0, 48.0, -36.0, 16.0, -3.0]) / 12.0
    return float(direction * (coef @ v) / h)


@dataclass(frozen=True)
class ProfileCurve:
    """Piecewise smooth warp function ``phi`` for ``dt^2 + phi(t)^2 dtheta^2``.

    Pieces must tile a single interval.  Interior piece boundaries are the
    breakpoints; the one-sided derivatives there are read off the declared
    closed forms of the adjacent pieces, never estimated.
    """

    pieces: tuple[ProfilePiece, ...]
    name: str = "profile"

    def __post_init__(self) -> None:
        if not self.pieces:
            raise GeometryError("profile needs at least one piece")
        for a, b in zip(self.pieces[:-1], self.pieces[1:]):
            if a.hi != b.lo:
                raise GeometryError("profile pieces must be contiguous")

    @property
    def domain(self) -> tuple[float, float]:
        return self.pieces[0].lo, self.pieces[-1].hi

    @property
    def breakpoints(self) -> tuple[float, ...]:
        return tuple(p.hi for p in self.pieces[:-1])

    def _piece_index(self, t: np.ndarray, side: int = 0) -> np.ndarray:
        bps = np.asarray(self.breakpoints)
        if side < 0:
            return np.searchsorted(bps, t, side="left")
        return np.searchsorted(bps, t, side="right")

    def _eval(self, which: str, t, side: int = 0):
        t_arr = np.asarray(t, dtype=float)
        idx = self._piece_index(t_arr, side)
        out = np.empty_like(t_arr)
        for i, piece in enumerate(self.pieces):
            mask = idx == i
            if np.any(mask):
                out[mask] = getattr(piece, which)(t_arr[mask])
        return out if out.ndim else float(out)

    def __call__(self, t):
        return self._eval("phi", t)

    def derivative(self, t, order: int = 1, side: int = 0):
        """Derivative of ``phi``; ``side=-1/+1`` picks the left/right piece at a breakpoint."""
        name = {0: "phi", 1: "dphi", 2: "d2phi"}[order]
        return self._eval(name, t, side)

    def one_sided_derivatives(self, tj: float) -> tuple[float, float]:
        """Declared ``(phi'(tj-), phi'(tj+))``."""
        return float(self.derivative(tj, 1, side=-1)), float(self.derivative(tj, 1, side=+1))

    def scaled(self, delta: float) -> "ProfileCurve":
        """Profile ``delta * phi``: the same meridians around a circle shrunk by ``delta``."""
        pieces = tuple(
            ProfilePiece(
                p.lo,
                p.hi,
                (lambda t, f=p.phi: delta * f(t)),
                (lambda t, f=p.dphi: delta * f(t)),
                (lambda t, f=p.d2phi: delta * f(t)),
            )
            for p in self.pieces
        )
        return ProfileCurve(pieces, name=f"{self.name}*{delta:g}")

    def check(self, n: int = 2001, fd_step: float = 1e-3) -> dict:
        """Positivity, continuity and derivative consistency diagnostics."""
        lo, hi = self.domain
        lo_s = lo if np.isfinite(lo) else -20.0
        hi_s = hi if np.isfinite(hi) else 20.0
        ts = np.linspace(lo_s, hi_s, n)[1:-1]
        positive = bool(np.all(np.asarray(self(ts)) > 0))
        jumps = []
        deriv_rel = 0.0
        for i, tj in enumerate(self.breakpoints):
            left, right = self.pieces[i], self.pieces[i + 1]
            jumps.append(abs(float(left.phi(np.array([tj]))[0] - right.phi(np.array([tj]))[0])))
            dl, dr = self.one_sided_derivatives(tj)
            fl = _one_sided_fd(left.phi, tj, fd_step, -1)
            fr = _one_sided_fd(right.phi, tj, fd_step, +1)
            for declared, est in ((dl, fl), (dr, fr)):
                deriv_rel = max(deriv_rel, abs(declared - est) / max(1.0, abs(declared)))
        return {
            "positive": positive,
            "max_jump": max(jumps, default=0.0),
            "max_derivative_defect": deriv_rel,
            "ok": positive and max(jumps, default=0.0) == 0.0 and deriv_rel <= 1e-8,
        }


def _piece(lo, hi, phi, dphi, d2phi) -> ProfilePiece:
    return ProfilePiece(float(lo), float(hi), phi, dphi, d2phi)


def hat_profile() -> ProfileCurve:
    """``phi(t) = 1 + |t|``: two planes minus the unit disk, glued along the circle."""
    return ProfileCurve(
        (
            _piece(-np.inf, 0.0, lambda t: 1.0 - t, lambda t: -np.ones_like(t), np.zeros_like),
            _piece(0.0, np.inf, lambda t: 1.0 + t, np.ones_like, np.zeros_like),
        ),
        name="paper-hat",
    )


def base_profile() -> ProfileCurve:
    """``phi0(r) = sqrt(1 + r^2)``, the smooth base metric of the conformal model."""
    return ProfileCurve(
        (
            _piece(
                -np.inf,
                np.inf,
                lambda r: np.sqrt(1.0 + r * r),
                lambda r: r / np.sqrt(1.0 + r * r),
                lambda r: (1.0 + r * r) ** -1.5,
            ),
        ),
        name="paper-base",
    )


def flat_profile() -> ProfileCurve:
    return ProfileCurve(
        (_piece(-np.inf, np.inf, np.ones_like, np.zeros_like, np.zeros_like),),
        name="flat-cylinder",
    )


def hyperbolic_profile() -> ProfileCurve:
    """``cosh t``: constant curvature -1."""
    return ProfileCurve((_piece(-np.inf, np.inf, np.cosh, np.sinh, np.cosh),), name="hyperbolic")


def glued_spheres_profile(r0: float) -> ProfileCurve:
    """Two round unit spheres with a cap of radius ``r0`` removed, glued along the rims."""
    if not 0.0 < r0 < math.pi / 2:
        raise GeometryError("glued spheres need 0 < r0 < pi/2")
    end = math.pi - r0
    return ProfileCurve(
        (
            _piece(-end, 0.0, lambda t: np.sin(r0 - t), lambda t: -np.cos(r0 - t), lambda t: -np.sin(r0 - t)),
            _piece(0.0, end, lambda t: np.sin(r0 + t), lambda t: np.cos(r0 + t), lambda t: -np.sin(r0 + t)),
        ),
        name=f"glued-spheres({r0:g})",
    )


def custom_profile(expressions: Sequence[str], breakpoints: Sequence[float] = (), name: str = "custom") -> ProfileCurve:
    """Profile from sympy-parsable expressions in ``t``, one per piece."""
    import sympy as sp

    if len(expressions) != len(breakpoints) + 1:
        raise GeometryError("need one expression per piece")
    t = sp.Symbol("t", real=True)
    edges = [-np.inf, *map(float, breakpoints), np.inf]
    pieces = []
    for i, expr in enumerate(expressions):
        e = sp.sympify(expr, locals={"t": t})
        fns = [sp.lambdify(t, d, "numpy") for d in (e, sp.diff(e, t), sp.diff(e, t, 2))]
        vec = [(lambda x, g=g: np.broadcast_to(np.asarray(g(x), dtype=float), np.shape(x)).copy()) for g in fns]
        pieces.append(_piece(edges[i], edges[i + 1], *vec))
    return ProfileCurve(tuple(pieces), name=name)


# ---------------------------------------------------------------------------
# Radial scalar fields (conformal factors)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RadialField:
    """Scalar field depending on the radial coordinate only.

    ``kinks`` lists the points where the field is merely Lipschitz; the
    derivative callables are only meaningful away from them.
    """

    value: Func
    d1: Func
    d2: Func
    kinks: tuple[float, ...] = ()
    name: str = "field"

    def __call__(self, r):
        return self.value(np.asarray(r, dtype=float))

    def derivative(self, r, order: int = 1):
        r = np.asarray(r, dtype=float)
        return (self.value, self.d1, self.d2)[order](r)

    @property
    def is_smooth(self) -> bool:
        return not self.kinks

    @classmethod
    def from_samples(cls, r: np.ndarray, values: np.ndarray, name: str = "sampled") -> "RadialField":
        spline = CubicSpline(np.asarray(r, float), np.asarray(values, float), extrapolate=True)
        d1, d2 = spline.derivative(1), spline.derivative(2)
        return cls(spline, d1, d2, (), name)

    @classmethod
    def constant(cls, c: float = 0.0) -> "RadialField":
        return cls(lambda r: np.full_like(r, c, dtype=float), np.zeros_like, np.zeros_like, (), f"const({c:g})")


def paper_conformal_factor(r):
    """``log(1 + |r| / sqrt(1 + r^2))``, equal to ``argsinh|r| - log sqrt(1 + r^2)``."""
    r = np.asarray(r, dtype=float)
    out = np.log1p(np.abs(r) / np.sqrt(1.0 + r * r))
    return out if out.ndim else float(out)


def _paper_factor_d1(r):
    a = np.abs(r)
    s = np.sqrt(1.0 + a * a)
    return np.sign(r) / ((a + s) * (1.0 + a * a))


def _paper_factor_d2(r):
    a = np.abs(r)
    s = np.sqrt(1.0 + a * a)
    return -(3.0 * a * (a + s) + 1.0) / ((a + s) ** 2 * (1.0 + a * a) ** 2)


def paper_factor_field() -> RadialField:
    """The conformal factor turning ``g0`` into the hat metric (kink at ``r = 0``)."""
    return RadialField(paper_conformal_factor, _paper_factor_d1, _paper_factor_d2, (0.0,), "paper-factor")


def hat_coordinate(r):
    """Closed-form meridian arclength ``t(r) = sign(r) (|r| + sqrt(1 + r^2) - 1)`` of the glued model."""
    r = np.asarray(r, dtype=float)
    return np.sign(r) * (np.abs(r) + np.sqrt(1.0 + r * r) - 1.0)


def hat_coordinate_inverse(t):
    t = np.asarray(t, dtype=float)
    a = np.abs(t) + 1.0
    return np.sign(t) * (a * a - 1.0) / (2.0 * a)


# ---------------------------------------------------------------------------
# Surfaces
# ---------------------------------------------------------------------------


class _PiecewiseSpline:
    """Cubic splines glued at breakpoints; C^0 across them."""

    def __init__(self, xs: list[np.ndarray], ys: list[np.ndarray]):
        self.edges = np.array([x[0] for x in xs[1:]])
        self.splines = [CubicSpline(x, y) for x, y in zip(xs, ys)]

    def __call__(self, x):
        x_arr = np.asarray(x, dtype=float)
        idx = np.searchsorted(self.edges, x_arr, side="right")
        out = np.empty_like(x_arr)
        for i, s in enumerate(self.splines):
            m = idx == i
            if np.any(m):
                out[m] = s(x_arr[m])
        return out if out.ndim else float(out)


class RotationalSurface:
    """Common machinery for ``A(r)^2 dr^2 + B(r)^2 dtheta^2``.

    Subclasses supply ``A``, ``B``, ``dB``, the domain and the breakpoints.
    """

    name: str
    r_min: float
    r_max: float

    _table_nodes = 4000  # per unit of coordinate length, capped below

    # to be provided by subclasses
    def A(self, r):  # pragma: no cover - interface
        raise NotImplementedError

    def B(self, r):  # pragma: no cover - interface
        raise NotImplementedError

    def dB(self, r, side: int = 0):  # pragma: no cover - interface
        raise NotImplementedError

    @property
    def breakpoints(self) -> tuple[float, ...]:
        return ()

    @property
    def is_smooth(self) -> bool:
        return not self.breakpoints

    # -- tabulated conformal chart -------------------------------------------------

    def _segments(self) -> list[np.ndarray]:
        edges = [self.r_min, *[b for b in self.breakpoints if self.r_min < b < self.r_max], self.r_max]
        if 0.0 not in edges and self.r_min < 0.0 < self.r_max:
            edges = sorted([*edges, 0.0])
        segs = []
        for a, b in zip(edges[:-1], edges[1:]):
            n = int(min(max(200, (b - a) * 1000), 12000)) | 1
            segs.append(np.linspace(a, b, n))
        return segs

    @cached_property
    def _chart(self):
        segs = self._segments()
        us, ms = [], []
        for x in segs:
            ratio = np.asarray(self.A(x), float) / np.asarray(self.B(x), float)
            us.append(integrate.cumulative_simpson(ratio, x=x, initial=0.0))
            ms.append(integrate.cumulative_simpson(np.asarray(self.A(x), float), x=x, initial=0.0))
        # chain the pieces so both integrals vanish at r = 0
        for lst in (us, ms):
            offset = 0.0
            for i in range(len(lst)):
                lst[i] = lst[i] + offset
                offset = lst[i][-1]
        zero_seg = next(i for i, x in enumerate(segs) if x[0] <= 0.0 <= x[-1])
        u0 = float(np.interp(0.0, segs[zero_seg], us[zero_seg]))
        m0 = float(np.interp(0.0, segs[zero_seg], ms[zero_seg]))
        us = [u - u0 for u in us]
        ms = [m - m0 for m in ms]
        return segs, us, ms

    @cached_property
    def _u_of_r(self):
        segs, us, _ = self._chart
        return _PiecewiseSpline(segs, us)

    @cached_property
    def _r_of_u(self):
        segs, us, _ = self._chart
        return _PiecewiseSpline(us, segs)

    @cached_property
    def _m_of_r(self):
        segs, _, ms = self._chart
        return _PiecewiseSpline(segs, ms)

    @property
    def u_range(self) -> tuple[float, float]:
        _, us, _ = self._chart
        return float(us[0][0]), float(us[-1][-1])

    def u_of_r(self, r):
        """Conformal coordinate ``u(r) = int_0^r A/B``."""
        return self._u_of_r(r)

    def r_of_u(self, u):
        return self._r_of_u(u)

    def meridian_coordinate(self, r):
        """Signed arclength ``int_0^r A`` along a meridian."""
        return self._m_of_r(r)

    def conformal_scale(self, u):
        """``B`` as a function of the conformal coordinate."""
        return self.B(self.r_of_u(u))

    # -- curvature --------------------------------------------------------------

    def gaussian_curvature(self, r):
        """Smooth part of the Gaussian curvature at ``r`` (away from breakpoints)."""
        raise NotImplementedError

    def contains(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        return (r >= self.r_min) & (r <= self.r_max)

    def area_density(self, r):
        """``A B``: the area form is ``A B dr dtheta``."""
        return np.asarray(self.A(r)) * np.asarray(self.B(r))


@dataclass(frozen=True, eq=False)
class WarpedMetric(RotationalSurface):
    """``dt^2 + phi(t)^2 dtheta^2`` truncated to ``|t| <= r_max`` for numerics."""

    profile: ProfileCurve
    r_max_truncation: float = 12.0

    def __post_init__(self) -> None:
        lo, hi = self.profile.domain
        if lo > 0.0 or hi < 0.0:
            raise GeometryError("profile domain must contain t = 0")

    @property
    def name(self) -> str:  # type: ignore[override]
        return self.profile.name

    @property
    def r_min(self) -> float:  # type: ignore[override]
        lo = self.profile.domain[0]
        return max(lo + 1e-3 if np.isfinite(lo) else -np.inf, -self.r_max_truncation)

    @property
    def r_max(self) -> float:  # type: ignore[override]
        hi = self.profile.domain[1]
        return min(hi - 1e-3 if np.isfinite(hi) else np.inf, self.r_max_truncation)

    @property
    def breakpoints(self) -> tuple[float, ...]:
        return self.profile.breakpoints

    def A(self, r):
        return np.ones_like(np.asarray(r, dtype=float))

    def B(self, r):
        return self.profile(r)

    def dB(self, r, side: int = 0):
        return self.profile.derivative(r, 1, side)

    def gaussian_curvature(self, r):
        return curvature_ac(self.profile, r)

    def scaled(self, delta: float) -> "WarpedMetric":
        return WarpedMetric(self.profile.scaled(delta), self.r_max_truncation)


@dataclass(frozen=True, eq=False)
class ConformalSurface(RotationalSurface):
    """``g_f = e^{2 f} g0`` for a radial factor ``f`` on a warped base ``g0``.

    ``L`` and ``lam`` are the declared sup-norm and Lipschitz bounds of ``f``;
    when omitted they are measured on a sample grid.
    """

    base: WarpedMetric
    factor: RadialField
    L: float | None = None
    lam: float | None = None
    label: str = ""

    @property
    def name(self) -> str:  # type: ignore[override]
        return self.label or f"{self.base.name}+{self.factor.name}"

    @property
    def r_min(self) -> float:  # type: ignore[override]
        return self.base.r_min

    @property
    def r_max(self) -> float:  # type: ignore[override]
        return self.base.r_max

    @property
    def breakpoints(self) -> tuple[float, ...]:
        return tuple(sorted(set(self.base.breakpoints) | set(self.factor.kinks)))

    def A(self, r):
        return np.exp(self.factor(r))

    def B(self, r):
        return np.exp(self.factor(r)) * self.base.B(r)

    def dB(self, r, side: int = 0):
        r = np.asarray(r, dtype=float)
        d1 = self.factor.derivative(r, 1)
        if side and self.factor.kinks:
            # one-sided derivative of a kinked factor
            for k in self.factor.kinks:
                at = np.isclose(r, k, atol=0.0, rtol=0.0)
                if np.any(at):
                    d1 = np.where(at, self.factor.derivative(np.nextafter(k, side * np.inf), 1), d1)
        return np.exp(self.factor(r)) * (d1 * self.base.B(r) + self.base.dB(r, side))

    # the conformal factor does not change the conformal chart
    def u_of_r(self, r):
        return self.base.u_of_r(r)

    def r_of_u(self, u):
        return self.base.r_of_u(u)

    @property
    def u_range(self) -> tuple[float, float]:
        return self.base.u_range

    def gaussian_curvature(self, r):
        return conformal_curvature(self, r)

    def measured_bounds(self, n: int = 20001) -> tuple[float, float]:
        """Sampled ``(sup |f|, sup |df|_{g0})`` over the truncated domain."""
        r = np.linspace(self.r_min, self.r_max, n)
        vals = np.asarray(self.factor(r))
        lip = np.max(np.abs(np.diff(vals)) / np.diff(np.asarray(self.base.meridian_coordinate(r))))
        return float(np.max(np.abs(vals))), float(lip)

    @property
    def sup_bound(self) -> float:
        return self.L if self.L is not None else self.measured_bounds()[0]

    @property
    def lipschitz_bound(self) -> float:
        return self.lam if self.lam is not None else self.measured_bounds()[1]

    def check(self, n: int = 20001, grid_tol: float = 1e-3) -> dict:
        sup, lip = self.measured_bounds(n)
        ok_sup = self.L is None or sup <= self.L * (1 + 1e-12)
        ok_lip = self.lam is None or lip <= self.lam * (1 + grid_tol)
        return {"sup": sup, "lip": lip, "ok": bool(ok_sup and ok_lip)}


# ---------------------------------------------------------------------------
# Named instances
# ---------------------------------------------------------------------------


def paper_hat_metric(r_max: float = 12.0) -> WarpedMetric:
    return WarpedMetric(hat_profile(), r_max)


def paper_base_metric(r_max: float = 12.0) -> WarpedMetric:
    return WarpedMetric(base_profile(), r_max)


def flat_cylinder(r_max: float = 12.0) -> WarpedMetric:
    return WarpedMetric(flat_profile(), r_max)


def hyperbolic_cylinder(r_max: float = 12.0) -> WarpedMetric:
    return WarpedMetric(hyperbolic_profile(), r_max)


def paper_conformal_surface(r_max: float = 12.0) -> ConformalSurface:
    """The hat metric written as ``e^{2f} g0`` in the base coordinate ``r``."""
    return ConformalSurface(paper_base_metric(r_max), paper_factor_field(), L=math.log(2.0), lam=1.0, label="paper-conformal")


# ---------------------------------------------------------------------------
# Curvature
# ---------------------------------------------------------------------------


def curvature_ac(profile: ProfileCurve, t):
    """Gaussian curvature ``-phi''/phi`` of a warped product at a non-breakpoint."""
    t_arr = np.asarray(t, dtype=float)
    bps = np.asarray(profile.breakpoints)
    if bps.size and np.any(np.isin(t_arr, bps)):
        raise GeometryError(
            "curvature at a breakpoint is singular; use curvature_measure(...).singular_parts"
        )
    out = -np.asarray(profile.derivative(t_arr, 2)) / np.asarray(profile(t_arr))
    return out if np.ndim(out) else float(out)


def laplacian_radial(surface: RotationalSurface, field: RadialField, r):
    """Non-negative Laplacian of a radial field: ``-(1/(A B)) (B/A f')'``."""
    r = np.asarray(r, dtype=float)
    if isinstance(surface, ConformalSurface):
        raise GeometryError("laplacian_radial expects a warped base")
    phi = np.asarray(surface.B(r))
    dphi = np.asarray(surface.dB(r))
    return -(field.derivative(r, 2) + dphi / phi * field.derivative(r, 1))


def conformal_curvature(surface: ConformalSurface, r):
    """``K_{g_f} = e^{-2f} (K_{g0} + laplacian_{g0} f)`` for a radial factor."""
    r_arr = np.asarray(r, dtype=float)
    for k in surface.factor.kinks:
        if np.any(np.abs(r_arr - k) < 1e-12):
            raise GeometryError("conformal factor is not twice differentiable here")
    if surface.base.breakpoints and np.any(np.isin(r_arr, surface.base.breakpoints)):
        raise GeometryError("base metric curvature is singular here")
    k0 = curvature_ac(surface.base.profile, r_arr)
    lap = laplacian_radial(surface.base, surface.factor, r_arr)
    out = np.exp(-2.0 * surface.factor(r_arr)) * (k0 + lap)
    return out if np.ndim(out) else float(out)


@dataclass(frozen=True)
class CurvatureMeasure:
    """Gaussian curvature as a measure on a rotational surface.

    ``density`` is the absolutely continuous part per unit area.  Each
    singular part is a circle ``{r_j}`` carrying ``weight`` per unit of the
    angular coordinate ``theta`` (so the circle's total is ``2 pi w_j``).
    """

    surface: RotationalSurface
    singular_parts: tuple[tuple[float, float], ...]

    def density(self, r):
        return self.surface.gaussian_curvature(r)

    @property
    def has_singular_part(self) -> bool:
        return bool(self.singular_parts)

    def ac_total(self, lo: float, hi: float) -> float:
        """``int int K dA`` over the collar ``lo <= r <= hi``, absolutely continuous part."""
        s = self.surface
        if isinstance(s, WarpedMetric):
            # int -phi'' dt telescopes piecewise
            edges = [lo, *[b for b in s.breakpoints if lo < b < hi], hi]
            tot = 0.0
            for a, b in zip(edges[:-1], edges[1:]):
                tot -= float(s.profile.derivative(b, 1, side=-1)) - float(s.profile.derivative(a, 1, side=+1))
            return TWO_PI * tot
        edges = [lo, *[b for b in s.breakpoints if lo < b < hi], hi]
        tot = 0.0
        for a, b in zip(edges[:-1], edges[1:]):
            val, _ = integrate.quad(
                lambda x: float(s.gaussian_curvature(x)) * float(s.area_density(x)), a, b, limit=200, epsabs=1e-12
            )
            tot += val
        return TWO_PI * tot

    def singular_total(self, lo: float, hi: float) -> float:
        return TWO_PI * sum(w for rj, w in self.singular_parts if lo <= rj <= hi)

    def total(self, lo: float, hi: float) -> float:
        return self.ac_total(lo, hi) + self.singular_total(lo, hi)

    def sup_density(self, lo: float, hi: float, n: int = 20001) -> float:
        r = np.linspace(lo, hi, n)
        r = r[~np.isin(r, self.surface.breakpoints)]
        return float(np.max(self.density(r)))


def curvature_measure(obj) -> CurvatureMeasure:
    """Curvature measure of a profile, warped metric or conformal surface.

    For a warped product the circle ``{t_j}`` carries ``-(phi'(t_j+) - phi'(t_j-))``
    per unit ``theta``.  For ``e^{2f} g0`` with a kinked factor the circle carries
    ``-(f'(r_j+) - f'(r_j-)) * phi0(r_j)``.
    """
    if isinstance(obj, ProfileCurve):
        obj = WarpedMetric(obj)
    if isinstance(obj, WarpedMetric):
        parts = []
        for tj in obj.breakpoints:
            left, right = obj.profile.one_sided_derivatives(tj)
            parts.append((float(tj), -(right - left)))
        return CurvatureMeasure(obj, tuple(parts))
    if isinstance(obj, ConformalSurface):
        parts = []
        for rj in obj.factor.kinks:
            left = float(obj.factor.derivative(np.nextafter(rj, -np.inf), 1))
            right = float(obj.factor.derivative(np.nextafter(rj, np.inf), 1))
            parts.append((float(rj), -(right - left) * float(obj.base.B(rj))))
        for tj in obj.base.breakpoints:
            left, right = obj.base.profile.one_sided_derivatives(tj)
            parts.append((float(tj), -(right - left)))
        return CurvatureMeasure(obj, tuple(sorted(parts)))
    raise TypeError(f"cannot build a curvature measure from {type(obj).__name__}")


def gauss_bonnet_mesh_total(surface: RotationalSurface, lo: float, hi: float, n_r: int = 400, n_theta: int = 1600) -> float:
    """Total curvature of the collar ``lo <= r <= hi`` from angle defects of a triangulated grid.

    Independent of :func:`curvature_measure`: edge lengths are integrated
    from the metric along coordinate segments, angles come from the law of
    cosines, and each vertex carries ``2 pi - sum of its angles``.  The grid
    overhangs the collar by a few rows so that no vertex of the sum sits on
    the mesh boundary; the two end rows count with weight 1/2.  Breakpoints
    are forced onto grid rows.
    """
    h = (hi - lo) / n_r
    pad = 4
    lo_m, hi_m = max(lo - pad * h, surface.r_min), min(hi + pad * h, surface.r_max)
    n_lo = int(round((lo - lo_m) / h))
    n_hi = int(round((hi_m - hi) / h))
    r = np.linspace(lo - n_lo * h, hi + n_hi * h, n_r + n_lo + n_hi + 1)
    for b in surface.breakpoints:
        if r[0] < b < r[-1]:
            r[np.argmin(np.abs(r - b))] = b
    n_rows = r.size - 1
    dth = TWO_PI / n_theta
    gx, gw = np.polynomial.legendre.leggauss(8)
    gs, gw = (gx + 1) / 2, gw / 2

    def seglen(r0, r1, dtheta):
        rr = r0[..., None] + (r1 - r0)[..., None] * gs
        da = np.asarray(surface.A(rr)) * (r1 - r0)[..., None]
        db = np.asarray(surface.B(rr)) * dtheta[..., None]
        return (np.sqrt(da * da + db * db) * gw).sum(-1)

    angles = np.zeros((n_rows + 1, n_theta))
    i = np.arange(n_rows)[:, None] * np.ones((1, n_theta), dtype=int)
    j = np.ones((n_rows, 1), dtype=int) * np.arange(n_theta)[None, :]

    def edge(p, q):
        return seglen(r[i + p[0]], r[i + q[0]], (q[1] - p[1]) * dth * np.ones(i.shape))

    for tri in (((0, 0), (1, 0), (1, 1)), ((0, 0), (1, 1), (0, 1))):
        p, q, s = tri
        a = edge(p, q)  # opposite s
        b = edge(q, s)  # opposite p
        c = edge(s, p)  # opposite q
        ang_p = np.arccos(np.clip((a * a + c * c - b * b) / (2 * a * c), -1, 1))
        ang_q = np.arccos(np.clip((a * a + b * b - c * c) / (2 * a * b), -1, 1))
        ang_s = math.pi - ang_p - ang_q
        for v, ang in ((p, ang_p), (q, ang_q), (s, ang_s)):
            np.add.at(angles, (i + v[0], (j + v[1]) % n_theta), ang)
    defect = (TWO_PI - angles).sum(axis=1)
    weights = np.zeros(n_rows + 1)
    weights[n_lo : n_lo + n_r + 1] = 1.0
    # rows on the mesh boundary have no full star; the caller's collar must avoid them
    weights[0] = weights[-1] = 0.0
    if n_lo > 0:
        weights[n_lo] = 0.5
    if n_hi > 0:
        weights[n_lo + n_r] = 0.5
    return float(weights @ defect)


def curvature_bounds(surface: RotationalSurface, lo: float | None = None, hi: float | None = None, n: int = 20001) -> tuple[float, float]:
    """Sampled ``(inf K, sup K)`` of the smooth part."""
    lo = surface.r_min if lo is None else lo
    hi = surface.r_max if hi is None else hi
    r = np.linspace(lo, hi, n)
    r = r[~np.isin(r, surface.breakpoints)]
    k = np.asarray(surface.gaussian_curvature(r))
    return float(k.min()), float(k.max())


# ---------------------------------------------------------------------------
# Conformal identification of the glued model
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConformalChangeReport:
    r: np.ndarray = field(repr=False)
    t_quadrature: np.ndarray = field(repr=False)
    max_defect: float
    max_coordinate_defect: float
    tol: float

    @property
    def passed(self) -> bool:
        return self.max_defect <= self.tol and self.max_coordinate_defect <= self.tol


def verify_conformal_change(
    surface: ConformalSurface | None = None, r_max: float = 10.0, n: int = 1000, tol: float = 1e-8
) -> ConformalChangeReport:
    """Check that ``e^{2f} g0`` is the hat metric ``dt^2 + (1 + |t|)^2 dtheta^2``.

    ``t(r) = int_0^r e^f`` is computed by adaptive quadrature between grid
    nodes; the warp identity ``e^{f(r)} phi0(r) = 1 + |t(r)|`` and the closed
    form ``t(r) = r + sqrt(1 + r^2) - 1`` are both checked.
    """
    surface = surface or paper_conformal_surface()
    r = np.linspace(0.0, r_max, n)
    steps = np.array(
        [integrate.quad(lambda x: math.exp(float(surface.factor(x))), a, b, epsabs=1e-14, epsrel=1e-13)[0] for a, b in zip(r[:-1], r[1:])]
    )
    t = np.concatenate([[0.0], np.cumsum(steps)])
    warp = np.exp(np.asarray(surface.factor(r))) * np.asarray(surface.base.B(r))
    defect = np.abs(warp - (1.0 + np.abs(t)))
    coord = np.abs(t - hat_coordinate(r))
    return ConformalChangeReport(r, t, float(defect.max()), float(coord.max()), tol)

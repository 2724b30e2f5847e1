"""Unit-speed paths on rotational surfaces, stored as sequences of arcs.

Three arc kinds cover every path this package produces:

* :class:`IntegratedArc` - a numerically integrated geodesic segment;
* :class:`PlanarChord` - a straight segment in one sheet of the hat surface,
  which is isometric to the plane minus the open unit disk through
  ``(t, theta) -> (1 + |t|) (cos theta, sin theta)``;
* :class:`BoundaryArc` - a piece of a coordinate circle ``{r = const}``.

Positions are reported in the surface's own ``(r, theta)`` coordinates with
``theta`` unwrapped along the path.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence, Union

import numpy as np


@dataclass(frozen=True)
class BoundaryArc:
    r: float
    theta0: float
    theta1: float
    radius: float

    @property
    def length(self) -> float:
        return self.radius * abs(self.theta1 - self.theta0)

    def positions(self, s: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        sign = 1.0 if self.theta1 >= self.theta0 else -1.0
        return np.full_like(s, self.r), self.theta0 + sign * s / self.radius


@dataclass(frozen=True)
class PlanarChord:
    """Straight segment in sheet ``sheet`` (+1: ``t >= 0``, -1: ``t <= 0``) of the hat surface."""

    sheet: int
    start: tuple[float, float]
    end: tuple[float, float]
    theta_offset: float = 0.0

    @property
    def length(self) -> float:
        return math.hypot(self.end[0] - self.start[0], self.end[1] - self.start[1])

    def positions(self, s: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        L = self.length
        frac = s / L if L > 0 else np.zeros_like(s)
        x = self.start[0] + frac * (self.end[0] - self.start[0])
        y = self.start[1] + frac * (self.end[1] - self.start[1])
        rho = np.hypot(x, y)
        # a chord outside the unit disk subtends less than pi
        cross = self.start[0] * y - self.start[1] * x
        dot = self.start[0] * x + self.start[1] * y
        t = self.sheet * np.maximum(rho - 1.0, 0.0)
        return t, self.theta_offset + np.arctan2(cross, dot)


@dataclass(frozen=True)
class IntegratedArc:
    """Dense geodesic segment; ``state(s)`` returns rows ``(r, theta, psi)``.

    ``psi`` is the angle of the velocity from the outward meridian, so the
    Clairaut quantity is ``B(r) sin psi``.
    """

    s: np.ndarray = field(repr=False)
    r: np.ndarray = field(repr=False)
    theta: np.ndarray = field(repr=False)
    psi: np.ndarray = field(repr=False)
    state: Callable[[np.ndarray], np.ndarray] = field(repr=False)

    @property
    def length(self) -> float:
        return float(self.s[-1] - self.s[0])

    def positions(self, s: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        y = self.state(self.s[0] + np.asarray(s, dtype=float))
        return y[0], y[1]


@dataclass(frozen=True)
class LineArc:
    """Straight segment in coordinates; a geodesic only where the metric is flat."""

    start: tuple[float, float]
    end: tuple[float, float]
    arc_length: float

    @property
    def length(self) -> float:
        return self.arc_length

    def positions(self, s: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        frac = np.asarray(s, float) / self.arc_length if self.arc_length > 0 else np.zeros_like(s)
        return (
            self.start[0] + frac * (self.end[0] - self.start[0]),
            self.start[1] + frac * (self.end[1] - self.start[1]),
        )


@dataclass(frozen=True)
class MappedArc:
    """An arc computed in another radial coordinate, reported through ``r_of_t``."""

    inner: object
    r_of_t: Callable = field(repr=False)

    @property
    def length(self) -> float:
        return self.inner.length

    def positions(self, s: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        t, th = self.inner.positions(s)
        return np.asarray(self.r_of_t(t), dtype=float), th


Arc = Union[BoundaryArc, PlanarChord, IntegratedArc, LineArc, MappedArc]


@dataclass(frozen=True)
class GeodesicPath:
    """Arclength-parametrized path made of consecutive arcs."""

    arcs: tuple[Arc, ...]
    truncated: bool = False
    label: str = ""

    @property
    def total_length(self) -> float:
        return float(sum(a.length for a in self.arcs))

    length = total_length

    def _locate(self, s: np.ndarray):
        bounds = np.cumsum([0.0] + [a.length for a in self.arcs])
        idx = np.clip(np.searchsorted(bounds, s, side="right") - 1, 0, len(self.arcs) - 1)
        return bounds, idx

    def __call__(self, s) -> np.ndarray:
        """Positions ``(r, theta)`` at arclengths ``s``; shape ``(..., 2)``."""
        s_arr = np.atleast_1d(np.asarray(s, dtype=float))
        bounds, idx = self._locate(s_arr)
        r = np.empty_like(s_arr)
        th = np.empty_like(s_arr)
        for k, arc in enumerate(self.arcs):
            m = idx == k
            if np.any(m):
                local = np.clip(s_arr[m] - bounds[k], 0.0, arc.length)
                rr, tt = arc.positions(local)
                r[m], th[m] = rr, tt
        out = np.stack([r, th], axis=-1)
        return out[0] if np.ndim(s) == 0 else out

    def sample(self, n: int = 401) -> tuple[np.ndarray, np.ndarray]:
        s = np.linspace(0.0, self.total_length, n)
        return s, self(s)

    @property
    def start(self) -> np.ndarray:
        return self(0.0)

    @property
    def end(self) -> np.ndarray:
        return self(self.total_length)

    def joint_defects(self) -> list[float]:
        """Coordinate gaps between consecutive arcs (theta compared mod 2 pi)."""
        out = []
        for a, b in zip(self.arcs[:-1], self.arcs[1:]):
            ra, ta = a.positions(np.array([a.length]))
            rb, tb = b.positions(np.array([0.0]))
            dth = (ta[0] - tb[0] + math.pi) % (2 * math.pi) - math.pi
            out.append(float(math.hypot(ra[0] - rb[0], dth)))
        return out

    def speed_defect(self, surface, ds: float = 1e-4, n: int = 200) -> float:
        """Max ``| |difference quotient|_g - 1 |`` over ``n`` sampled parameters."""
        L = self.total_length
        if L <= 2 * ds:
            return 0.0
        s = np.linspace(ds, L - ds, n)
        a = self(s - ds / 2)
        b = self(s + ds / 2)
        mid = 0.5 * (a[:, 0] + b[:, 0])
        dr = b[:, 0] - a[:, 0]
        dth = b[:, 1] - a[:, 1]
        A = np.asarray(surface.A(mid))
        B = np.asarray(surface.B(mid))
        speed = np.sqrt((A * dr) ** 2 + (B * dth) ** 2) / ds
        return float(np.max(np.abs(speed - 1.0)))

    def concat(self, other: "GeodesicPath") -> "GeodesicPath":
        return GeodesicPath(self.arcs + other.arcs, self.truncated or other.truncated, self.label)

    def to_csv(self, path: str | Path, n: int = 401) -> Path:
        path = Path(path)
        s, pts = self.sample(n)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["s", "t", "theta"])
            for si, (ri, ti) in zip(s, pts):
                w.writerow([f"{si:.12g}", f"{ri:.12g}", f"{ti:.12g}"])
        return path


# ---------------------------------------------------------------------------
# SVG rendering of the two sheets
# ---------------------------------------------------------------------------


def _chart_points(surface, pts: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Map ``(r, theta)`` to the conformal chart: sheet sign and planar ``e^{|u|} (cos, sin)``."""
    u = np.asarray(surface.u_of_r(pts[:, 0]), dtype=float)
    rho = np.exp(np.abs(u))
    sheet = np.where(u >= 0, 1, -1)
    return sheet, rho * np.cos(pts[:, 1]), rho * np.sin(pts[:, 1])


def render_paths_svg(
    surface,
    paths: Sequence[tuple[GeodesicPath, str]],
    path: str | Path,
    extent: float = 4.0,
    size: int = 360,
) -> Path:
    """Draw paths on both sheets side by side (left: ``r >= 0``, right: ``r <= 0``).

    Each sheet is drawn in the conformal chart ``e^{|u|} (cos theta, sin theta)``,
    which for the hat surface is exactly the planar picture outside the unit disk.
    """
    path = Path(path)
    pad = 10
    scale = (size / 2 - pad) / extent
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{2 * size}" height="{size}" viewBox="0 0 {2 * size} {size}">',
        '<rect width="100%" height="100%" fill="white"/>',
    ]
    for panel, title in ((0, "sheet r>=0"), (1, "sheet r<=0")):
        cx, cy = panel * size + size / 2, size / 2
        parts.append(f'<circle cx="{cx:.2f}" cy="{cy:.2f}" r="{scale:.2f}" fill="#eee" stroke="black" stroke-width="1"/>')
        parts.append(f'<text x="{panel * size + pad}" y="{pad + 10}" font-size="12" font-family="sans-serif">{title}</text>')
    for gp, color in paths:
        _, pts = gp.sample(801)
        sheet, x, y = _chart_points(surface, pts)
        for panel, sgn in ((0, 1), (1, -1)):
            on = (sheet == sgn) | (np.abs(pts[:, 0]) < 1e-12)
            cx, cy = panel * size + size / 2, size / 2
            # split into runs lying on this sheet
            runs, cur = [], []
            for k in range(len(x)):
                if on[k]:
                    cur.append(f"{cx + scale * x[k]:.2f},{cy - scale * y[k]:.2f}")
                elif cur:
                    runs.append(cur)
                    cur = []
            if cur:
                runs.append(cur)
            for run in runs:
                if len(run) > 1:
                    parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="2" points="{" ".join(run)}"/>')
    parts.append("</svg>")
    path.write_text("\n".join(parts))
    return path

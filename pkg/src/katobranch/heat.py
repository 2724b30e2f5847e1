"""Heat kernels and heat-semigroup smoothing on rotational surfaces.

Everything lives in the conformal chart ``(u, theta)`` where the metric is
``B(u)^2 (du^2 + dtheta^2)`` and the Laplace-Beltrami operator is
``B^{-2} (d_uu + d_thth)``.  A Fourier mode ``h_k(u) e^{i k theta}`` then obeys
a one-dimensional equation; with cell masses ``W = B^2 du`` and the
second-difference matrix ``S`` it reads ``W dh/dt = -(S + k^2 du) h``.

Two independent discretizations of the same semigroup are provided:

* :func:`heat_kernel` marches a narrow Gaussian in time with Crank-Nicolson
  (after four backward-Euler start-up substeps), Dirichlet ends at the
  edge of a window sized from the Gaussian tail budget;
* :class:`SemigroupSolver` diagonalizes the symmetrized generator on the
  whole truncated surface with reflecting ends, which gives ``exp(-t L)``
  exactly for any ``t``.
"""

from __future__ import annotations

import csv
import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.linalg import eigh_tridiagonal, solve_banded

from .geodesics import DistanceField, distance_field
from .geometry import (
    ConformalSurface,
    RadialField,
    RotationalSurface,
    WarpedMetric,
    laplacian_radial,
)

TWO_PI = 2.0 * math.pi
BINARY_MAGIC = b"KBHK"
BINARY_VERSION = 1


class HeatRefinementError(RuntimeError):
    """The kernel failed a conservation check; ``suggested`` holds a finer grid."""

    def __init__(self, message: str, suggested: dict):
        super().__init__(message)
        self.suggested = suggested


# ---------------------------------------------------------------------------
# Grids
# ---------------------------------------------------------------------------


def _meridian_to_r(surface: RotationalSurface, m_targets: np.ndarray) -> np.ndarray:
    r = np.linspace(surface.r_min, surface.r_max, 20001)
    m = np.asarray(surface.meridian_coordinate(r), dtype=float)
    return np.interp(m_targets, m, r)


def kernel_window(surface: RotationalSurface, r_x: float, radius: float, du: float) -> np.ndarray:
    """Uniform ``u`` grid containing ``u(r_x)`` as a node and the metric ball of ``radius``."""
    m_x = float(surface.meridian_coordinate(r_x))
    r_lo, r_hi = _meridian_to_r(surface, np.array([m_x - radius, m_x + radius]))
    u_lo, u_hi = surface.u_range
    a = max(float(surface.u_of_r(r_lo)), u_lo)
    b = min(float(surface.u_of_r(r_hi)), u_hi)
    u_x = float(surface.u_of_r(r_x))
    j_lo = math.ceil((a - u_x) / du - 1e-9)
    j_hi = math.floor((b - u_x) / du + 1e-9)
    return u_x + du * np.arange(j_lo, j_hi + 1)


def tail_radius(t_max: float, budget: float = 1e-6) -> float:
    """Metric window radius whose Gaussian tail at ``t_max`` is below ``budget``."""
    return max(1.0, 1.1 * math.sqrt(4.0 * t_max * math.log(1.0 / budget)))


def default_k_max(surface: RotationalSurface, r_x: float, t_min: float, floor: int = 64, budget: float = 1e-8) -> int:
    """Smallest mode cutoff with ``exp(-k^2 t_min / B^2) < budget`` near the source."""
    m_x = float(surface.meridian_coordinate(r_x))
    reach = 6.0 * math.sqrt(t_min)
    rr = _meridian_to_r(surface, np.linspace(m_x - reach, m_x + reach, 101))
    b_reach = float(np.max(surface.B(rr)))
    return max(floor, int(math.ceil(b_reach * math.sqrt(math.log(1.0 / budget) / t_min))))


# ---------------------------------------------------------------------------
# Crank-Nicolson heat kernel
# ---------------------------------------------------------------------------


def _mode_step(h: np.ndarray, W: np.ndarray, du: float, k2: np.ndarray, dt: float, theta: float) -> np.ndarray:
    """One theta-scheme step for all modes at once, Dirichlet ends."""
    K1, N = h.shape
    diag = 2.0 / du + k2[:, None] * du
    Sh = diag * h
    Sh[:, 1:] -= h[:, :-1] / du
    Sh[:, :-1] -= h[:, 1:] / du
    rhs = W[None, :] * h - (1.0 - theta) * dt * Sh
    lhs_d = W[None, :] + theta * dt * diag
    lhs_d[:, 0] = 1.0
    lhs_d[:, -1] = 1.0
    rhs[:, 0] = 0.0
    rhs[:, -1] = 0.0
    c = -theta * dt / du
    ab = np.zeros((3, K1, N))
    ab[1] = lhs_d
    ab[0][:, 2:] = c
    ab[2][:, : N - 2] = c
    return solve_banded((1, 1), ab.reshape(3, K1 * N), rhs.ravel(), check_finite=False).reshape(K1, N)


def _march(h: np.ndarray, W, du, k2, t0: float, times: Sequence[float], dt_max: float, grade: float):
    out = []
    t = t0
    first = True
    for T in times:
        while t < T - 1e-15:
            dt = min(dt_max, grade * t, T - t)
            if first:
                for _ in range(4):
                    h = _mode_step(h, W, du, k2, dt / 4.0, 1.0)
                first = False
            else:
                h = _mode_step(h, W, du, k2, dt, 0.5)
            t += dt
        out.append(h.copy())
    return out


@dataclass(frozen=True)
class HeatKernelField:
    """Fourier coefficients ``h_k(t_i, u_j)`` of ``H(t_i, x, .)`` for ``0 <= k <= k_max``.

    ``H(t, x, (u, theta)) = (1/2pi) sum_k h_k(t, u) e^{i k (theta - theta_x)}``
    with ``h_{-k} = h_k``.
    """

    surface: RotationalSurface = field(repr=False)
    source: tuple[float, float]
    times: np.ndarray
    u: np.ndarray = field(repr=False)
    r: np.ndarray = field(repr=False)
    B: np.ndarray = field(repr=False)
    W: np.ndarray = field(repr=False)
    coeffs: np.ndarray = field(repr=False)
    k_max: int
    radius: float
    t0: float

    @property
    def du(self) -> float:
        return float(self.u[1] - self.u[0])

    @property
    def n_theta(self) -> int:
        return max(256, 1 << int(math.ceil(math.log2(2 * (self.k_max + 1)))))

    def theta_grid(self, n_theta: int | None = None) -> np.ndarray:
        n = n_theta or self.n_theta
        return TWO_PI * np.arange(n) / n

    def time_index(self, t: float) -> int:
        i = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[i] - t) > 1e-12 * max(1.0, t):
            raise KeyError(f"time {t} not in the kernel's time grid")
        return i

    def mass(self, i: int) -> float:
        return float(self.coeffs[i, 0] @ self.W)

    def grid_values(self, i: int, n_theta: int | None = None) -> np.ndarray:
        """``H`` on the ``(u, theta)`` grid, shape ``(len(u), n_theta)``."""
        n = n_theta or self.n_theta
        K1 = min(self.k_max + 1, n // 2 + 1)
        k = np.arange(K1)
        c = self.coeffs[i, :K1].astype(complex) * np.exp(-1j * k * self.source[1])[:, None]
        full = np.zeros((n // 2 + 1, self.u.size), dtype=complex)
        full[:K1] = c
        return (np.fft.irfft(full, n=n, axis=0) * (n / TWO_PI)).T

    def value(self, i: int, r, theta) -> np.ndarray:
        """``H`` at arbitrary points; cubic interpolation in ``u`` between nodes."""
        r = np.atleast_1d(np.asarray(r, dtype=float))
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        uq = np.asarray(self.surface.u_of_r(r), dtype=float)
        k = np.arange(self.k_max + 1)
        inside = (uq >= self.u[0]) & (uq <= self.u[-1])
        hk = np.where(inside[None, :], CubicSpline(self.u, self.coeffs[i], axis=1)(np.clip(uq, self.u[0], self.u[-1])), 0.0)
        w = np.where(k == 0, 1.0, 2.0)[:, None]
        return (w * hk * np.cos(k[:, None] * (theta - self.source[1]))).sum(0) / TWO_PI

    def to_csv(self, path: str | Path, n_theta: int = 64, stride: int = 1) -> Path:
        path = Path(path)
        th = self.theta_grid(n_theta)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "r", "theta", "H"])
            for i, t in enumerate(self.times):
                H = self.grid_values(i, max(n_theta, 2 * (self.k_max + 1)))
                H = H[:, :: max(1, H.shape[1] // n_theta)][:, :n_theta]
                for j in range(0, self.u.size, stride):
                    for m in range(n_theta):
                        w.writerow([f"{t:.12g}", f"{self.r[j]:.12g}", f"{th[m]:.12g}", f"{H[j, m]:.12g}"])
        return path

    def to_binary(self, path: str | Path, n_theta: int | None = None) -> Path:
        """Write ``H`` as a row-major float64 array ``[t, r, theta]`` after a JSON header."""
        n = n_theta or self.n_theta
        data = np.stack([self.grid_values(i, n) for i in range(self.times.size)]).astype("<f8")
        header = {
            "version": BINARY_VERSION,
            "dtype": "float64-le",
            "order": "C",
            "shape": list(data.shape),
            "axes": ["t", "r", "theta"],
            "t": self.times.tolist(),
            "r": self.r.tolist(),
            "theta": {"n": n, "start": 0.0, "step": TWO_PI / n},
            "source": list(self.source),
            "surface": self.surface.name,
        }
        raw = json.dumps(header, sort_keys=True).encode()
        path = Path(path)
        with path.open("wb") as fh:
            fh.write(BINARY_MAGIC)
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
            fh.write(np.ascontiguousarray(data).tobytes())
        return path


def read_kernel_binary(path: str | Path) -> tuple[dict, np.ndarray]:
    """Inverse of :meth:`HeatKernelField.to_binary`."""
    blob = Path(path).read_bytes()
    if blob[:4] != BINARY_MAGIC:
        raise ValueError("not a kernel file")
    (n,) = struct.unpack("<I", blob[4:8])
    header = json.loads(blob[8 : 8 + n])
    data = np.frombuffer(blob[8 + n :], dtype="<f8").reshape(header["shape"])
    return header, data


def heat_kernel(
    surface: RotationalSurface,
    source: tuple[float, float],
    times: Sequence[float],
    *,
    k_max: int | None = None,
    du: float | None = None,
    radius: float | None = None,
    modes: int | None = None,
    dt_max: float = 1e-3,
    grade: float = 0.05,
    mass_tol: float = 1e-3,
) -> HeatKernelField:
    """Heat kernel ``H(t, x, .)`` at the requested times.

    The source is replaced by the Gaussian of matching small time
    ``t0 = (B(x) du)^2``.  By default ``du = min(0.005, 0.2 sqrt(t_min) / B(x))``
    so that ``t0`` stays well below the first requested time.  Steps grow geometrically, ``dt = min(dt_max,
    grade * t)``, which keeps the start-up error of the narrow Gaussian under
    control.  ``modes`` limits the computation to ``k <= modes`` (radial
    quantities only need ``k = 0``).
    """
    times = np.asarray(sorted(float(t) for t in times))
    if times[0] <= 0:
        raise ValueError("times must be positive")
    if times[-1] > 0.25 + 1e-12:
        raise ValueError("times above 0.25 are outside the supported range")
    r_x, th_x = float(source[0]), float(source[1])
    radius = tail_radius(times[-1]) if radius is None else radius
    if du is None:
        du = min(0.005, 0.2 * math.sqrt(times[0]) / float(surface.B(r_x)))
    u = kernel_window(surface, r_x, radius, du)
    if u.size < 8:
        raise ValueError("kernel window too small; decrease du")
    r = np.asarray(surface.r_of_u(u), dtype=float)
    B = np.asarray(surface.conformal_scale(u), dtype=float)
    W = B * B * du
    u_x = float(surface.u_of_r(r_x))
    i_x = int(np.argmin(np.abs(u - u_x)))
    B_x = B[i_x]
    t0 = (B_x * du) ** 2
    if times[0] <= t0:
        raise ValueError(f"first time {times[0]} must exceed the start-up time {t0}")
    if k_max is None:
        k_max = default_k_max(surface, r_x, times[0])
    K = k_max if modes is None else min(modes, k_max)
    g = np.exp(-(B_x**2) * (u - u[i_x]) ** 2 / (4.0 * t0))
    g /= g @ W
    k = np.arange(K + 1)
    h = g[None, :] * np.exp(-(k[:, None] ** 2) * t0 / B_x**2)
    h[:, 0] = 0.0
    h[:, -1] = 0.0
    out = _march(h, W, du, (k * k).astype(float), t0, times, dt_max, grade)
    field_ = HeatKernelField(surface, (r_x, th_x), times, u, r, B, W, np.stack(out), K, radius, t0)
    for i, t in enumerate(times):
        m = field_.mass(i)
        if abs(m - 1.0) > mass_tol:
            raise HeatRefinementError(
                f"mass {m:.6g} at t={t} is off by more than {mass_tol}",
                {"du": du / 2, "radius": radius * 1.5},
            )
    return field_


# ---------------------------------------------------------------------------
# Exact semigroup by diagonalization
# ---------------------------------------------------------------------------


class SemigroupSolver:
    """``exp(-t laplacian)`` on a whole truncated rotational surface.

    Reflecting (Neumann) ends, finite-volume cells with half cells at the
    ends.  Each Fourier mode's generator is symmetrized by the cell masses
    and diagonalized once; applying the semigroup for any ``t`` is then two
    dense products.  Mode 0 conserves ``sum W v`` exactly and the evolution
    is positivity preserving.
    """

    def __init__(self, surface: RotationalSurface, du: float = 0.002):
        self.surface = surface
        u_lo, u_hi = surface.u_range
        n = int(round((u_hi - u_lo) / du)) + 1
        self.u = np.linspace(u_lo, u_hi, n)
        self.du = float(self.u[1] - self.u[0])
        self.r = np.asarray(surface.r_of_u(self.u), dtype=float)
        self.B = np.asarray(surface.conformal_scale(self.u), dtype=float)
        cell = np.full(n, self.du)
        cell[0] = cell[-1] = 0.5 * self.du
        self.cell = cell
        self.W = self.B**2 * cell
        self._eig: dict[int, tuple[np.ndarray, np.ndarray]] = {}

    def eig(self, k: int = 0) -> tuple[np.ndarray, np.ndarray]:
        k = abs(int(k))
        if k not in self._eig:
            n = self.u.size
            s_diag = np.full(n, 2.0 / self.du)
            s_diag[0] = s_diag[-1] = 1.0 / self.du
            d = (s_diag + k * k * self.cell) / self.W
            e = (-1.0 / self.du) / np.sqrt(self.W[:-1] * self.W[1:])
            lam, Q = eigh_tridiagonal(d, e)
            lam = np.maximum(lam, 0.0)
            self._eig[k] = (lam, Q)
        return self._eig[k]

    def spectral_apply(self, values: np.ndarray, weights: Callable[[np.ndarray], np.ndarray], k: int = 0) -> np.ndarray:
        """``g(L_k) v`` for a spectral multiplier ``g`` evaluated on the eigenvalues."""
        lam, Q = self.eig(k)
        sw = np.sqrt(self.W)
        y = Q.T @ (sw * values)
        return (Q @ (weights(lam) * y)) / sw

    def apply(self, values: np.ndarray, t: float, k: int = 0) -> np.ndarray:
        return self.spectral_apply(values, lambda lam: np.exp(-t * lam), k)

    def duhamel(self, source: np.ndarray, T: float, k: int = 0) -> np.ndarray:
        """``int_0^T exp(-s L) source ds``: the solution of ``v' = -L v + source``, ``v(0) = 0``."""

        def w(lam):
            out = np.full_like(lam, T)
            big = lam * T > 1e-12
            out[big] = -np.expm1(-lam[big] * T) / lam[big]
            small = ~big
            out[small] = T - 0.5 * lam[small] * T * T
            return out

        return self.spectral_apply(source, w, k)

    def laplacian(self, values: np.ndarray, k: int = 0) -> np.ndarray:
        """Discrete non-negative Laplacian of mode ``k`` (reflecting ends)."""
        v = np.asarray(values, dtype=float)
        Sv = np.empty_like(v)
        Sv[1:-1] = (2 * v[1:-1] - v[:-2] - v[2:]) / self.du
        Sv[0] = (v[0] - v[1]) / self.du
        Sv[-1] = (v[-1] - v[-2]) / self.du
        return (Sv + k * k * self.cell * v) / self.W


@dataclass(frozen=True)
class SampledField:
    """Field sampled on the solver grid: radial (``theta is None``) or ``(r, theta)``."""

    r: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)
    theta: np.ndarray | None = field(repr=False, default=None)

    def __call__(self, r, theta=None):
        r = np.asarray(r, dtype=float)
        if self.theta is None:
            return np.interp(r, self.r, self.values)
        # linear in r, trigonometric interpolation in theta (exact for band-limited data)
        th = np.asarray(theta, dtype=float)
        n = self.theta.size
        coef = np.fft.rfft(self.values, axis=1) / n
        k = np.arange(coef.shape[1])
        w = np.where((k == 0) | ((n % 2 == 0) & (k == n // 2)), 1.0, 2.0)
        re = np.stack([np.interp(r, self.r, coef[:, j].real) for j in k], -1)
        im = np.stack([np.interp(r, self.r, coef[:, j].imag) for j in k], -1)
        ang = k * th[..., None]
        return (w * (re * np.cos(ang) - im * np.sin(ang))).sum(-1)

    def to_radial_field(self, name: str = "sampled") -> RadialField:
        if self.theta is not None:
            raise ValueError("only radial fields convert to RadialField")
        return RadialField.from_samples(self.r, self.values, name)


def semigroup_apply(
    surface: RotationalSurface,
    field_,
    eps: float,
    *,
    solver: SemigroupSolver | None = None,
    n_theta: int = 64,
) -> SampledField:
    """``exp(-eps laplacian) u`` for a radial field ``u(r)`` or a field ``u(r, theta)``.

    Radial inputs are callables of one argument (or :class:`RadialField`);
    two-argument callables are expanded in ``n_theta`` Fourier modes.
    """
    solver = solver or SemigroupSolver(surface)
    try:
        vals = np.asarray(field_(solver.r), dtype=float)
        radial = vals.shape == solver.r.shape
    except TypeError:
        radial = False
    if radial:
        return SampledField(solver.r, solver.apply(vals, eps, 0))
    theta = TWO_PI * np.arange(n_theta) / n_theta
    R, TH = np.meshgrid(solver.r, theta, indexing="ij")
    grid = np.asarray(field_(R, TH), dtype=float)
    spec = np.fft.rfft(grid, axis=1)
    out = np.zeros_like(spec)
    for k in range(spec.shape[1]):
        col = spec[:, k]
        if np.max(np.abs(col)) < 1e-14 * max(1.0, np.max(np.abs(spec))):
            continue
        out[:, k] = solver.apply(col.real, eps, k) + 1j * solver.apply(col.imag, eps, k)
    return SampledField(solver.r, np.fft.irfft(out, n=n_theta, axis=1), theta)


def kernel_convolution(kernel: HeatKernelField, i: int, u_field: Callable, theta_dependent: bool = False) -> float:
    """``int H(t_i, x, y) u(y) dv(y)`` by quadrature on the kernel grid."""
    if not theta_dependent:
        return float(kernel.coeffs[i, 0] @ (kernel.W * np.asarray(u_field(kernel.r), dtype=float)))
    th = kernel.theta_grid()
    H = kernel.grid_values(i)
    R, TH = np.meshgrid(kernel.r, th, indexing="ij")
    vals = np.asarray(u_field(R, TH), dtype=float)
    return float(((H * vals).sum(1) * (TWO_PI / th.size)) @ kernel.W)


# ---------------------------------------------------------------------------
# Smoothing of the conformal factor
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SmoothingMember:
    eps: float
    smoothed: RadialField = field(repr=False)
    surface: ConformalSurface = field(repr=False)
    sup_norm: float
    oscillation: float
    lipschitz: float
    sup_curvature: float
    sup_deviation: float
    sup_laplacian: float

    @property
    def deviation_ratio(self) -> float:
        """``sup |f_eps - f| / sqrt(eps)``."""
        return self.sup_deviation / math.sqrt(self.eps)


@dataclass(frozen=True)
class SmoothingFamily:
    """Heat regularizations ``f_eps = exp(-eps laplacian_{g0}) f`` with diagnostics."""

    base: WarpedMetric = field(repr=False)
    factor: RadialField = field(repr=False)
    L: float
    lam: float
    kappa: float
    K: float
    M: float
    members: tuple[SmoothingMember, ...]
    C: float
    C_spread: float
    checks: dict

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    @property
    def curvature_bound(self) -> float:
        return math.exp(2 * self.L) * (self.K + self.M)

    def member(self, eps: float) -> SmoothingMember:
        return next(m for m in self.members if abs(m.eps - eps) < 1e-14)

    def as_dict(self) -> dict:
        return {
            "L": self.L,
            "lambda": self.lam,
            "kappa": self.kappa,
            "K": self.K,
            "M": self.M,
            "curvature_bound": self.curvature_bound,
            "C": self.C,
            "C_spread": self.C_spread,
            "members": [
                {
                    "eps": m.eps,
                    "sup_norm": m.sup_norm,
                    "oscillation": m.oscillation,
                    "lipschitz": m.lipschitz,
                    "sup_curvature": m.sup_curvature,
                    "sup_deviation": m.sup_deviation,
                    "deviation_ratio": m.deviation_ratio,
                    "sup_laplacian": m.sup_laplacian,
                }
                for m in self.members
            ],
            "checks": self.checks,
            "passed": self.passed,
        }


def measured_M(base: WarpedMetric, factor: RadialField, n: int = 200001) -> float:
    """Sup of the absolutely continuous part of ``laplacian_{g0} f``."""
    r = np.linspace(base.r_min, base.r_max, n)
    for k in factor.kinks:
        r = r[np.abs(r - k) > 1e-9]
    return float(np.max(laplacian_radial(base, factor, r)))


def smooth_conformal_factor(
    base: WarpedMetric,
    factor: RadialField,
    eps_list: Sequence[float],
    *,
    L: float | None = None,
    lam: float | None = None,
    kappa: float | None = None,
    K: float | None = None,
    du: float = 0.002,
    solver: SemigroupSolver | None = None,
    lip_slack: float = 0.02,
    C_stability: float = 0.25,
    curvature_slack: float = 0.05,
) -> SmoothingFamily:
    """Smooth ``f`` by the heat semigroup of ``g0`` and measure the regularity claims.

    Checks recorded in ``checks``: sup-norm contraction, non-increasing
    oscillation, the Lipschitz bound ``e^{kappa^2 eps} lam (1 + lip_slack)``,
    stability of ``sup |f_eps - f| / sqrt(eps)`` within ``C_stability``, and
    ``sup K_{g_eps} <= e^{2L} (K + M) (1 + curvature_slack)``.
    """
    solver = solver or SemigroupSolver(base, du)
    r = solver.r
    f0 = np.asarray(factor(r), dtype=float)
    L = float(np.max(np.abs(f0))) if L is None else L
    rs = np.linspace(base.r_min, base.r_max, 200001)
    rs = rs[~np.isin(rs, factor.kinks)]
    lam = float(np.max(np.abs(factor.derivative(rs, 1)))) if lam is None else lam
    k0 = np.asarray(base.gaussian_curvature(rs))
    kappa = math.sqrt(float(np.max(np.abs(k0)))) if kappa is None else kappa
    K = max(0.0, float(np.max(k0))) if K is None else K
    M = measured_M(base, factor)
    m_coord = np.asarray(base.meridian_coordinate(r), dtype=float)
    members = []
    for eps in sorted(eps_list, reverse=True):
        fe = solver.apply(f0, eps, 0)
        fld = RadialField.from_samples(r, fe, f"heat-smoothed(eps={eps:g})")
        surf = ConformalSurface(base, fld, L=L, lam=lam, label=f"g_eps={eps:g}")
        lip = float(np.max(np.abs(np.diff(fe)) / np.diff(m_coord)))
        lap = solver.laplacian(fe, 0)
        # curvature from the discrete Laplacian, away from the reflecting ends
        inner = slice(2, -2)
        k_eps = np.exp(-2 * fe[inner]) * (np.asarray(base.gaussian_curvature(r[inner])) + lap[inner])
        members.append(
            SmoothingMember(
                float(eps),
                fld,
                surf,
                float(np.max(np.abs(fe))),
                float(np.max(fe) - np.min(fe)),
                lip,
                float(np.max(k_eps)),
                float(np.max(np.abs(fe - f0))),
                float(np.max(np.abs(lap[inner]))),
            )
        )
    members.sort(key=lambda m: m.eps, reverse=True)
    ratios = np.array([m.deviation_ratio for m in members])
    C = float(ratios.max())
    spread = float((ratios.max() - ratios.min()) / ratios.max()) if ratios.max() > 0 else 0.0
    bound = math.exp(2 * L) * (K + M)
    osc = [m.oscillation for m in members]  # eps decreasing
    devs = [m.sup_deviation for m in members]
    checks = {
        "sup_norm_contraction": all(m.sup_norm <= L * (1 + 1e-9) for m in members),
        "oscillation_monotone": all(a <= b + 1e-6 for a, b in zip(osc[:-1], osc[1:])),
        "lipschitz_bound": all(m.lipschitz <= math.exp(kappa**2 * m.eps) * lam * (1 + lip_slack) for m in members),
        "deviation_sqrt_eps": spread <= C_stability and all(m.sup_deviation <= C * math.sqrt(m.eps) * (1 + 1e-12) for m in members),
        "deviation_monotone": all(b <= a + 1e-6 for a, b in zip(devs[:-1], devs[1:])),
        "curvature_bound": all(m.sup_curvature <= bound * (1 + curvature_slack) for m in members),
    }
    return SmoothingFamily(base, factor, float(L), float(lam), float(kappa), float(K), M, tuple(members), C, spread, checks)


# ---------------------------------------------------------------------------
# Estimates built on the kernel
# ---------------------------------------------------------------------------


def _row_weights(u: np.ndarray, B: np.ndarray) -> np.ndarray:
    du = float(u[1] - u[0])
    w = B * B * du
    w[0] *= 0.5
    w[-1] *= 0.5
    return w


def ball_fraction(d: np.ndarray, radius: float) -> np.ndarray:
    """Fraction of each periodic row of ``d`` lying below ``radius`` (piecewise-linear sublevel)."""
    a = d
    b = np.roll(d, -1, axis=-1)
    lo = np.minimum(a, b)
    hi = np.maximum(a, b)
    with np.errstate(divide="ignore", invalid="ignore"):
        part = np.where(hi > lo, (radius - lo) / (hi - lo), 0.0)
    frac = np.where(hi <= radius, 1.0, np.where(lo >= radius, 0.0, np.clip(part, 0.0, 1.0)))
    return frac.mean(axis=-1)


def moment_from_field(kernel: HeatKernelField, i: int, dist: np.ndarray) -> float:
    H = kernel.grid_values(i, dist.shape[1])
    w = _row_weights(kernel.u, kernel.B)
    return float(((H * dist).mean(1) * TWO_PI) @ w)


@dataclass(frozen=True)
class MomentReport:
    T: float
    moment: float
    ratio: float
    inner: float
    tail_stieltjes: float
    mass: float


def first_moment(
    surface: RotationalSurface,
    x: tuple[float, float],
    T: float,
    *,
    kernel: HeatKernelField | None = None,
    dfield: DistanceField | None = None,
    du: float | None = None,
) -> MomentReport:
    """``int H(T, x, y) d(x, y) dv(y)`` with the split at radius ``sqrt(T)``.

    The inner part is the direct quadrature over ``B(x, sqrt T)``; the outer
    part is written as a Stieltjes integral of the tail-mass function,
    ``int_{d > sqrt T} d dmu = sqrt(T) tail(sqrt T) + int_{sqrt T}^inf tail(s) ds``,
    and both are reported.  ``moment`` is the direct full quadrature.
    """
    kernel = kernel or heat_kernel(surface, x, [T], du=du)
    i = kernel.time_index(T)
    n = kernel.n_theta
    dfield = dfield or distance_field(surface, x, kernel.u, kernel.theta_grid(n))
    d = dfield.values
    H = kernel.grid_values(i, d.shape[1])
    w = _row_weights(kernel.u, kernel.B)
    dens = H * w[:, None] * (TWO_PI / d.shape[1])
    total = float(dens.sum())
    moment = float((dens * d).sum())
    s0 = math.sqrt(T)
    inner = float((dens * d * (d <= s0)).sum())
    radii = np.linspace(s0, float(np.nanmax(d)), 400)
    tails = np.array([float(dens[d > s].sum()) for s in radii])
    stieltjes = s0 * tails[0] + float(np.trapezoid(tails, radii))
    return MomentReport(T, moment, moment / s0, inner, stieltjes, total)


def tail_mass(
    surface: RotationalSurface,
    x: tuple[float, float],
    R: float,
    t: float,
    *,
    kernel: HeatKernelField | None = None,
    dfield: DistanceField | None = None,
    du: float | None = None,
) -> float:
    """``int_{d(x, y) >= R} H(t, x, y) dv(y)`` with fractional cell coverage at the sphere."""
    kernel = kernel or heat_kernel(surface, x, [t], du=du, radius=max(tail_radius(t), 1.5 * R))
    i = kernel.time_index(t)
    dfield = dfield or distance_field(surface, x, kernel.u, kernel.theta_grid())
    d = dfield.values
    H = kernel.grid_values(i, d.shape[1])
    w = _row_weights(kernel.u, kernel.B)
    outside = 1.0 - _sublevel_weights(d, R)
    return float(((H * outside).mean(1) * TWO_PI) @ w)


def _share_below(d0: np.ndarray, d1: np.ndarray, R: float) -> np.ndarray:
    """Share of the half segment next to ``d0`` (towards ``d1``) where the linear interpolant is below ``R``."""
    slope = d1 - d0
    with np.errstate(divide="ignore", invalid="ignore"):
        s_star = np.clip((R - d0) / slope, 0.0, 0.5)
    rising = np.where(slope > 0, s_star / 0.5, (0.5 - s_star) / 0.5)
    return np.where(slope == 0, (d0 < R).astype(float), rising)


def _sublevel_weights(d: np.ndarray, R: float) -> np.ndarray:
    """Per-node share of its angular dual cell lying in ``{d < R}``."""
    return 0.5 * (_share_below(d, np.roll(d, -1, axis=-1), R) + _share_below(d, np.roll(d, 1, axis=-1), R))


@dataclass(frozen=True)
class TailFit:
    C: float
    c: float
    samples: tuple[tuple[float, float, float], ...]
    c_by_radius: dict
    spread: float

    def bound(self, R: float, t: float) -> float:
        return self.C * math.exp(-self.c * R * R / t)


def fit_tail_bound(samples: Sequence[tuple[float, float, float]]) -> TailFit:
    """Fit ``tail <= C exp(-c R^2 / t)`` over ``(R, t, tail)`` samples.

    ``c`` is the least-squares slope of ``log tail`` against ``R^2 / t``;
    ``C`` is then the smallest constant making the bound an envelope.  The
    spread of slopes fitted per radius measures stability.
    """
    arr = np.array([(R, t, tail) for R, t, tail in samples if tail > 0], dtype=float)
    x = arr[:, 0] ** 2 / arr[:, 1]
    y = np.log(arr[:, 2])
    slope, _ = np.polyfit(x, y, 1)
    c = max(-float(slope), 1e-12)
    C = float(np.max(np.exp(y + c * x)))
    by_r = {}
    for R in np.unique(arr[:, 0]):
        m = arr[:, 0] == R
        if m.sum() >= 2:
            s, _ = np.polyfit(x[m], y[m], 1)
            by_r[float(R)] = -float(s)
    vals = np.array(list(by_r.values())) if by_r else np.array([c])
    spread = float((vals.max() - vals.min()) / vals.max()) if vals.max() > 0 else 0.0
    return TailFit(C, c, tuple(map(tuple, arr.tolist())), by_r, spread)


@dataclass(frozen=True)
class LiYauReport:
    max_ratio: float
    ratios: np.ndarray = field(repr=False)
    samples: np.ndarray = field(repr=False)


def ball_volume_from_field(dfield: DistanceField, B: np.ndarray, radius: float) -> float:
    w = _row_weights(dfield.u, B)
    return float((ball_fraction(dfield.values, radius) * TWO_PI) @ w)


def liyau_check(
    surface: RotationalSurface,
    samples: np.ndarray,
    *,
    du_scale: float = 1.0,
) -> LiYauReport:
    """Max of ``H(t, x, y) vol(B(x, sqrt t)) exp(d(x, y)^2 / (5 t))`` over ``(t, x, y)`` samples.

    ``samples`` rows are ``(t, r_x, theta_x, r_y, theta_y)``.  Samples sharing
    a source reuse one kernel and one distance field.
    """
    samples = np.asarray(samples, dtype=float)
    ratios = np.empty(len(samples))
    groups: dict[tuple[float, float, float], list[int]] = {}
    for n, row in enumerate(samples):
        groups.setdefault((row[0], row[1], row[2]), []).append(n)
    for (t, rx, thx), idx in groups.items():
        du = du_scale * min(0.005, 0.2 * math.sqrt(t) / float(surface.B(rx)))
        ker = heat_kernel(surface, (rx, thx), [t], du=du)
        df = distance_field(surface, (rx, thx), ker.u, ker.theta_grid())
        vol = ball_volume_from_field(df, ker.B, math.sqrt(t))
        for n in idx:
            _, _, _, ry, thy = samples[n]
            H = float(ker.value(0, ry, thy)[0])
            d = _field_value(df, surface, ry, thy)
            ratios[n] = H * vol * math.exp(d * d / (5 * t))
    return LiYauReport(float(ratios.max()), ratios, samples)


def _field_value(df: DistanceField, surface: RotationalSurface, r: float, theta: float) -> float:
    uq = float(surface.u_of_r(r))
    n = df.theta.size
    pos = (theta % TWO_PI) / (TWO_PI / n)
    j0 = int(math.floor(pos)) % n
    w = pos - math.floor(pos)
    a = np.interp(uq, df.u, df.values[:, j0])
    b = np.interp(uq, df.u, df.values[:, (j0 + 1) % n])
    return float((1 - w) * a + w * b)


def liyau_samples(
    surface: RotationalSurface,
    n: int,
    base_points: Sequence[float],
    t_range: tuple[float, float] = (1e-3, 0.1),
    seed: int = 0,
    spread: float = 3.0,
    levels: int = 5,
) -> np.ndarray:
    """Random ``(t, r_x, theta_x, r_y, theta_y)`` rows with ``y`` within metric distance about ``spread sqrt(t)`` of ``x``.

    Times are drawn log-uniformly and snapped to ``levels`` geometric levels
    so that the number of kernel computations stays bounded.
    """
    rng = np.random.default_rng(seed)
    t = np.exp(rng.uniform(math.log(t_range[0]), math.log(t_range[1]), n))
    grid = np.geomspace(t_range[0], t_range[1], levels)
    t = grid[np.argmin(np.abs(np.log(t)[:, None] - np.log(grid)[None, :]), axis=1)]
    rx = rng.choice(np.asarray(base_points, dtype=float), n)
    rad = spread * np.sqrt(t) * np.sqrt(rng.uniform(0, 1, n))
    ang = rng.uniform(0, TWO_PI, n)
    A = np.asarray(surface.A(rx), dtype=float)
    B = np.asarray(surface.B(rx), dtype=float)
    return np.stack([t, rx, np.zeros(n), rx + rad * np.cos(ang) / A, rad * np.sin(ang) / B], axis=1)


@dataclass(frozen=True)
class SemigroupIdentityReport:
    defect: float
    lhs: np.ndarray = field(repr=False)
    rhs: np.ndarray = field(repr=False)
    points: np.ndarray = field(repr=False)


def semigroup_identity_check(
    surface: RotationalSurface,
    u_field: Callable,
    lap_u: Callable,
    T: float,
    points: Sequence[tuple[float, float]],
    *,
    theta_dependent: bool = False,
    n_times: int = 201,
    du: float = 0.005,
    solver: SemigroupSolver | None = None,
) -> SemigroupIdentityReport:
    """Compare ``-int_0^T int H(t, x, y) lap u(y) dv dt`` with ``(exp(-T lap) u - u)(x)``.

    The left side uses the Crank-Nicolson kernel from each point and Simpson's
    rule in time (the kernel is the delta up to ``t0``, where ``lap u(x)`` is
    used); the right side uses the diagonalized semigroup.
    """
    from scipy.integrate import simpson

    solver = solver or SemigroupSolver(surface)
    smoothed = semigroup_apply(surface, u_field, T, solver=solver)
    lhs, rhs = [], []
    for x in points:
        ker = heat_kernel(surface, x, np.linspace(0, T, n_times)[1:], du=du, modes=None if theta_dependent else 0)
        g = np.array([kernel_convolution(ker, i, lap_u, theta_dependent) for i in range(ker.times.size)])
        g0 = float(lap_u(np.array([x[0]]), np.array([x[1]]))[0]) if theta_dependent else float(lap_u(np.array([x[0]]))[0])
        ts = np.concatenate([[0.0], ker.times])
        gs = np.concatenate([[g0], g])
        lhs.append(-float(simpson(gs, x=ts)))
        if theta_dependent:
            val = float(smoothed(np.array([x[0]]), np.array([x[1]]))[0]) - float(u_field(np.array([x[0]]), np.array([x[1]]))[0])
        else:
            val = float(smoothed(np.array([x[0]]))[0]) - float(u_field(np.array([x[0]]))[0])
        rhs.append(val)
    lhs = np.array(lhs)
    rhs = np.array(rhs)
    return SemigroupIdentityReport(float(np.max(np.abs(lhs - rhs))), lhs, rhs, np.asarray(points, dtype=float))


# ---------------------------------------------------------------------------
# Closed forms on the flat cylinder
# ---------------------------------------------------------------------------


def flat_cylinder_kernel(t: float, dr, dtheta, radius: float = 1.0, images: int = 6):
    """Line Gaussian times the wrapped circle Gaussian (image sum) on ``dt^2 + radius^2 dtheta^2``."""
    dr = np.asarray(dr, dtype=float)
    dtheta = np.asarray(dtheta, dtype=float)
    line = np.exp(-dr * dr / (4 * t)) / math.sqrt(4 * math.pi * t)
    n = np.arange(-images, images + 1)
    s = radius * (dtheta[..., None] + TWO_PI * n)
    circ = np.exp(-s * s / (4 * t)).sum(-1) / math.sqrt(4 * math.pi * t)
    return line * circ

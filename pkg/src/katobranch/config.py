"""Experiment configuration: an INI file layered over embedded defaults."""

from __future__ import annotations

import configparser
import io
import math
from dataclasses import dataclass
from pathlib import Path

from .geometry import (
    RotationalSurface,
    WarpedMetric,
    custom_profile,
    flat_cylinder,
    glued_spheres_profile,
    hyperbolic_cylinder,
    paper_base_metric,
    paper_conformal_surface,
    paper_hat_metric,
)

DEFAULTS = """\
[surface]
# paper-hat | paper-base | paper-conformal | flat-cylinder | hyperbolic | glued-spheres | custom
kind = paper-hat
r_max = 12.0
# glued-spheres only
r0 = 1.0
# custom only: one expression per piece in the variable t, separated by ';'
expressions =
breakpoints =

[grids]
# conformal step of the Crank-Nicolson kernel (0 = automatic)
du = 0
# nodes of the whole-surface semigroup solver
semigroup_nodes = 3201
dt_max = 1e-3
# Fourier cutoff of the kernel (0 = automatic)
k_max = 0
# graph oracle step
dijkstra_h = 0.01

[smoothing]
eps = 0.1, 0.05, 0.025, 0.0125
L = 0.6931471805599453
lambda = 1.0
kappa = 1.0
K = 0.0

[kato]
T = 0.25
t_grid = 0.001, 0.004, 0.016, 0.064, 0.25
scaling_times = 0.001, 0.004, 0.016, 0.064
stability_times = 0.001, 0.004, 0.016, 0.064, 0.256, 1.0
base_points = 0, 0.25, 0.5, 1, 2, 4
certify_eps = 0.1, 0.05, 0.025
n_pairs = 6
pair_extent = 1.5
collapse_delta = 0.01

[tolerances]
distance = 1e-6
minimality = 1e-3
agreement = 1e-6
divergence = 0.5
lipschitz = 0.002
kernel_relative = 1e-3
mass = 1e-3
stability = 0.25
lipschitz_eps = 0.02
curvature = 0.05
moment_flat = 0.02
fit_residual = 0.05
kato_sanity = 0.01
identity = 1e-4
gauss_bonnet = 1e-3
branching_seconds = 60
certify_seconds = 900

[output]
dir = katobranch-out
seed = 0
"""

SURFACE_KINDS = (
    "paper-hat",
    "paper-base",
    "paper-conformal",
    "flat-cylinder",
    "hyperbolic",
    "glued-spheres",
    "custom",
)


class ConfigError(ValueError):
    pass


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(x) for x in text.replace(";", ",").split(",") if x.strip())


@dataclass(frozen=True)
class ExperimentConfig:
    parser: configparser.ConfigParser
    tol_scale: float = 1.0

    # --- access helpers ---------------------------------------------------------
    def get(self, section: str, key: str) -> str:
        return self.parser.get(section, key)

    def getfloat(self, section: str, key: str) -> float:
        return self.parser.getfloat(section, key)

    def getint(self, section: str, key: str) -> int:
        return self.parser.getint(section, key)

    def floats(self, section: str, key: str) -> tuple[float, ...]:
        return _floats(self.parser.get(section, key))

    def tol(self, key: str) -> float:
        """A tolerance multiplied by the global ``tol_scale``.

        Wall-clock budgets are not scaled.
        """
        v = self.parser.getfloat("tolerances", key)
        return v if key.endswith("_seconds") else v * self.tol_scale

    # --- derived values -----------------------------------------------------------
    @property
    def seed(self) -> int:
        return self.getint("output", "seed")

    @property
    def out_dir(self) -> Path:
        return Path(self.get("output", "dir"))

    @property
    def eps(self) -> tuple[float, ...]:
        return self.floats("smoothing", "eps")

    @property
    def base_points(self) -> tuple[float, ...]:
        return self.floats("kato", "base_points")

    def surface(self) -> RotationalSurface:
        kind = self.get("surface", "kind").strip()
        r_max = self.getfloat("surface", "r_max")
        if kind == "paper-hat":
            return paper_hat_metric(r_max)
        if kind == "paper-base":
            return paper_base_metric(r_max)
        if kind == "paper-conformal":
            return paper_conformal_surface(r_max)
        if kind == "flat-cylinder":
            return flat_cylinder(r_max)
        if kind == "hyperbolic":
            return hyperbolic_cylinder(r_max)
        if kind == "glued-spheres":
            return WarpedMetric(glued_spheres_profile(self.getfloat("surface", "r0")), r_max)
        if kind == "custom":
            exprs = [e.strip() for e in self.get("surface", "expressions").split(";") if e.strip()]
            if not exprs:
                raise ConfigError("custom surface needs [surface] expressions")
            bps = _floats(self.get("surface", "breakpoints"))
            return WarpedMetric(custom_profile(exprs, bps, name="custom"), r_max)
        raise ConfigError(f"unknown surface kind {kind!r}; expected one of {', '.join(SURFACE_KINDS)}")

    def validate(self) -> None:
        for key in ("semigroup_nodes", "dt_max", "dijkstra_h"):
            if self.getfloat("grids", key) <= 0:
                raise ConfigError(f"[grids] {key} must be positive")
        for key in ("du", "k_max"):
            if self.getfloat("grids", key) < 0:
                raise ConfigError(f"[grids] {key} must be non-negative")
        if self.getfloat("surface", "r_max") <= 0:
            raise ConfigError("[surface] r_max must be positive")
        eps = self.eps + self.floats("kato", "certify_eps")
        if not eps or any(not 0 < e <= 1 for e in eps):
            raise ConfigError("smoothing times must lie in (0, 1]")
        kappa = self.getfloat("smoothing", "kappa")
        t_hi = 1.0 / kappa**2 if kappa > 0 else math.inf
        for key in ("t_grid", "scaling_times", "stability_times"):
            ts = self.floats("kato", key)
            if not ts or any(not 0 < t <= t_hi for t in ts):
                raise ConfigError(f"[kato] {key} must lie in (0, 1/kappa^2]")
        T = self.getfloat("kato", "T")
        if not 0 < T <= min(0.25, t_hi):
            raise ConfigError("[kato] T must lie in (0, 0.25]")
        if self.tol_scale < 0:
            raise ConfigError("tolerance scale must be non-negative")
        self.surface()

    def dumps(self) -> str:
        buf = io.StringIO()
        self.parser.write(buf)
        return buf.getvalue()

    def as_dict(self) -> dict:
        return {s: dict(self.parser.items(s)) for s in self.parser.sections()}


def load_config(path: str | Path | None = None, *, overrides: dict[str, dict[str, str]] | None = None, tol_scale: float = 1.0) -> ExperimentConfig:
    """Defaults, then the file at ``path`` (if any), then ``overrides``."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    parser.optionxform = str  # keep key case (K vs k)
    parser.read_string(DEFAULTS)
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file {p} not found")
        try:
            parser.read_string(p.read_text(), source=str(p))
        except configparser.Error as exc:
            raise ConfigError(str(exc)) from exc
    for section, values in (overrides or {}).items():
        if not parser.has_section(section):
            parser.add_section(section)
        for k, v in values.items():
            parser.set(section, k, str(v))
    cfg = ExperimentConfig(parser, tol_scale)
    try:
        cfg.validate()
    except (ValueError, configparser.Error) as exc:
        raise ConfigError(str(exc)) from exc
    return cfg

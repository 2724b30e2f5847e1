"""Command-line runner.

Exit codes:

====  ===============================================================
0     success
1     a certificate, verdict or acceptance check failed
2     bad command line (argparse)
3     bad configuration file or values
4     numerical solver failure (geodesic, heat kernel, geometry)
5     output could not be written
6     unexpected internal error
====  ===============================================================
"""

from __future__ import annotations

import argparse
import csv
import enum
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import acceptance, geodesics as geo, heat, kato
from .config import ConfigError, ExperimentConfig, load_config
from .geometry import GeometryError
from .paths import render_paths_svg
from .svgplot import line_plot


class ExitCode(enum.IntEnum):
    OK = 0
    CHECK_FAILED = 1
    USAGE = 2
    CONFIG = 3
    SOLVER = 4
    OUTPUT = 5
    INTERNAL = 6


def _point(text: str) -> tuple[float, float]:
    try:
        a, b = (float(x) for x in text.replace(" ", "").split(","))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected 'r,theta', got {text!r}") from exc
    return a, b


def _floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _write_json(path: Path, data) -> Path:
    path.write_text(json.dumps(acceptance._jsonable(data), indent=2))
    return path


class Run:
    """Output directory, timings and the report written at the end of each command."""

    def __init__(self, cfg: ExperimentConfig, command: str):
        self.cfg = cfg
        self.command = command
        self.out = cfg.out_dir
        self.out.mkdir(parents=True, exist_ok=True)
        self.artifacts: dict[str, str] = {}
        self.t0 = time.perf_counter()

    def file(self, name: str) -> Path:
        p = self.out / name
        self.artifacts[name] = str(p)
        return p

    def finish(self, result: dict, passed: bool | None = None) -> None:
        report = {
            "command": self.command,
            "config": self.cfg.as_dict() | {"tol_scale": self.cfg.tol_scale},
            "result": result,
            "passed": passed,
            "artifacts": self.artifacts,
            "timings": {"total_s": time.perf_counter() - self.t0},
        }
        _write_json(self.out / "report.json", report)


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_distance(cfg: ExperimentConfig, args) -> int:
    surface = cfg.surface()
    res = geo.shortest_path(surface, args.p, args.q)
    run = Run(cfg, "distance")
    print(f"{res.value:.12g}")
    if res.path is not None:
        res.path.to_csv(run.file("path.csv"))
        render_paths_svg(surface, [(res.path, "#d62728")], run.file("path.svg"))
    run.finish({"surface": surface.name, "p": args.p, "q": args.q, "distance": res.value,
                "method": res.method, "converged": res.converged})
    if not res.converged:
        print("warning: shooting did not converge; value from the graph oracle", file=sys.stderr)
        return ExitCode.SOLVER
    return ExitCode.OK


def cmd_geodesic(cfg: ExperimentConfig, args) -> int:
    surface = cfg.surface()
    path = geo.integrate_geodesic(surface, args.start, length=args.length, psi=args.angle, label="geodesic")
    run = Run(cfg, "geodesic")
    path.to_csv(run.file("geodesic.csv"))
    render_paths_svg(surface, [(path, "#1f77b4")], run.file("geodesic.svg"))
    end = path.end.tolist()
    drift = geo.clairaut_drift(surface, path) if surface.is_smooth else float("nan")
    print(f"end r={end[0]:.12g} theta={end[1]:.12g} length={path.total_length:.12g}")
    run.finish({"surface": surface.name, "start": args.start, "angle": args.angle, "length": path.total_length,
                "end": end, "truncated": path.truncated, "clairaut_drift": drift})
    return ExitCode.OK


def cmd_branching(cfg: ExperimentConfig, args) -> int:
    hat = cfg.surface()
    trunk = geo.seam_trunk(args.length)
    if args.turn:
        branch = geo.kinked_branch(args.split, args.turn, args.length, args.sheet)
    else:
        branch = geo.tangent_branch(args.split, args.length, args.sheet)
    cert = geo.certify_branching(
        hat, trunk, branch, args.split,
        tol=cfg.tol("minimality"), agreement_tol=cfg.tol("agreement"),
        min_divergence=cfg.getfloat("tolerances", "divergence"),
    )
    run = Run(cfg, "branching")
    trunk.to_csv(run.file("trunk.csv"))
    branch.to_csv(run.file("branch.csv"))
    render_paths_svg(hat, [(trunk, "#1f77b4"), (branch, "#d62728")], run.file("branching.svg"))
    _write_json(run.file("branching.json"), cert.as_dict())
    print(f"certified={cert.certified} agreement={cert.agreement_defect:.3g} divergence={cert.divergence:.6g} "
          f"minimality={max(cert.minimality_defects):.3g}" + (f" failures={','.join(cert.failures)}" if cert.failures else ""))
    run.finish(cert.as_dict(), cert.certified)
    return ExitCode.OK if cert.certified else ExitCode.CHECK_FAILED


def cmd_heat_kernel(cfg: ExperimentConfig, args) -> int:
    surface = cfg.surface()
    du = cfg.getfloat("grids", "du") or None
    k_max = cfg.getint("grids", "k_max") or None
    ker = heat.heat_kernel(surface, args.source, args.times, du=du, k_max=k_max, dt_max=cfg.getfloat("grids", "dt_max"))
    run = Run(cfg, "heat-kernel")
    ker.to_csv(run.file("kernel.csv"), n_theta=args.n_theta, stride=args.stride)
    if args.binary:
        ker.to_binary(run.file("kernel.bin"))
    masses = [ker.mass(i) for i in range(ker.times.size)]
    series = []
    for i, t in enumerate(ker.times):
        series.append((f"t={t:g}", ker.r, ker.value(i, ker.r, np.full_like(ker.r, args.source[1]))))
    line_plot(series, run.file("kernel.svg"), title=f"H(t, x, .) along the meridian of x on {surface.name}",
              xlabel="r", ylabel="H")
    for t, m in zip(ker.times, masses):
        print(f"t={t:g} mass={m:.12g}")
    run.finish({"surface": surface.name, "source": args.source, "times": ker.times, "mass": masses,
                "k_max": ker.k_max, "du": ker.du})
    return ExitCode.OK


def cmd_smooth(cfg: ExperimentConfig, args) -> int:
    sm = acceptance.smoothing_family(cfg, args.eps or None)
    run = Run(cfg, "smooth")
    r = np.linspace(-4, 4, 801)
    with run.file("smoothing.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["r", "f", *[f"f_eps={m.eps:g}" for m in sm.members]])
        cols = [sm.factor(r)] + [m.smoothed(r) for m in sm.members]
        for i in range(r.size):
            w.writerow([repr(float(r[i]))] + [repr(float(c[i])) for c in cols])
    line_plot([("f", r, sm.factor(r))] + [(f"eps={m.eps:g}", r, m.smoothed(r)) for m in sm.members],
              run.file("smoothing.svg"), title="heat-smoothed conformal factor", xlabel="r", ylabel="f")
    d = sm.as_dict()
    _write_json(run.file("smoothing.json"), d)
    for name, ok in sm.checks.items():
        print(f"{'PASS' if ok else 'FAIL'} {name}")
    run.finish(d, sm.passed)
    return ExitCode.OK if sm.passed else ExitCode.CHECK_FAILED


def cmd_kato(cfg: ExperimentConfig, args) -> int:
    if args.eps is not None:
        sm = acceptance.smoothing_family(cfg, (args.eps,))
        surface = sm.members[0].surface
    else:
        surface = cfg.surface()
    times = args.times or cfg.floats("kato", "scaling_times")
    rep = kato.kato_scaling_report(surface, times, cfg.base_points, tolerance=cfg.tol("fit_residual"),
                                   solver=kato.solver_for(surface, cfg.getint("grids", "semigroup_nodes")))
    run = Run(cfg, "kato")
    with run.file("kato.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["T", "k_T", "fit"])
        for t, k in zip(rep.T, rep.k):
            w.writerow([repr(float(t)), repr(float(k)), repr(float(rep.fitted(t)))])
    line_plot([("k_T", rep.T, rep.k), ("a sqrt(T) + b T", rep.T, rep.fitted(rep.T))], run.file("kato.svg"),
              title=f"Kato constant on {surface.name}", xlabel="T", ylabel="k_T", logx=True, logy=True)
    print(f"a={rep.a:.6g} b={rep.b:.6g} residual={rep.residual:.3g} sup k/sqrtT={rep.sup_ratio:.6g}")
    run.finish({"surface": surface.name, **rep.as_dict()}, not rep.flagged)
    return ExitCode.CHECK_FAILED if rep.flagged else ExitCode.OK


def cmd_certify(cfg: ExperimentConfig, args) -> int:
    eps = args.eps or cfg.floats("kato", "certify_eps")
    if args.family == "paper":
        family = kato.family_from_smoothing(acceptance.smoothing_family(cfg, eps), "paper")
    elif args.family == "constant":
        family = kato.constant_family(eps)
    else:
        family = kato.collapsed_family(eps, cfg.getfloat("kato", "collapse_delta"))
    cert = kato.certify_strong_kato_limit(family, acceptance.certify_config(cfg))
    run = Run(cfg, "certify")
    cert.to_json(run.file("certificate.json"))
    cert.to_csv(run.file("kato_rows.csv"))
    series = [(f"eps={e:g}", cert.t_grid, cert.kato_table[e]) for e in cert.eps]
    series.append(("envelope", cert.t_grid, cert.control(cert.t_grid)))
    line_plot(series, run.file("certificate.svg"), title=f"Kato control, {family.name} family", xlabel="t",
              ylabel="k_t", logx=True, logy=True)
    print(f"verdict={cert.verdict} " + " ".join(f"{k}={'ok' if v else 'FAIL'}" for k, v in cert.components.items()))
    for f in cert.failures:
        print(f"  {f}")
    run.finish(cert.as_dict(), cert.verdict == "PASS")
    return ExitCode.OK if cert.verdict == "PASS" else ExitCode.CHECK_FAILED


def cmd_report(cfg: ExperimentConfig, args) -> int:
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    report = acceptance.run_checks(cfg, args.check, echo=print)
    with (out / "checks.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "key", "passed", "measured", "bound", "tolerance"])
        for c in report.checks:
            w.writerow([c.id, c.key, c.passed, repr(float(c.measured)), repr(float(c.bound)), repr(float(c.tolerance))])
    report.artifacts["checks.csv"] = str(out / "checks.csv")
    report.artifacts["report.json"] = str(out / "report.json")
    report.write(out / "report.json")
    n_fail = sum(not c.passed for c in report.checks)
    print(f"{len(report.checks) - n_fail}/{len(report.checks)} checks passed")
    return ExitCode.OK if report.passed else ExitCode.CHECK_FAILED


def cmd_show_config(cfg: ExperimentConfig, args) -> int:
    sys.stdout.write(cfg.dumps())
    return ExitCode.OK


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="INI file layered over the embedded defaults")
    common.add_argument("--out", metavar="DIR", help="output directory (overrides [output] dir)")
    common.add_argument("--seed", type=int, help="random seed (overrides [output] seed)")
    common.add_argument("--check", metavar="FILTER", help="comma-separated check ids or names (report only)")
    common.add_argument("--tol-scale", type=float, default=1.0, metavar="X", help="multiply every tolerance by X")
    common.add_argument("--surface", help="surface kind (overrides [surface] kind)")

    parser = argparse.ArgumentParser(prog="katobranch", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("distance", parents=[common], help="distance and shortest path between two points")
    p.add_argument("p", type=_point, help="r,theta")
    p.add_argument("q", type=_point, help="r,theta")
    p.set_defaults(func=cmd_distance)

    p = sub.add_parser("geodesic", parents=[common], help="integrate a geodesic from a point")
    p.add_argument("start", type=_point, help="r,theta")
    p.add_argument("--angle", type=float, default=0.0, help="angle to the outward meridian (radians)")
    p.add_argument("--length", type=float, default=1.0)
    p.set_defaults(func=cmd_geodesic)

    p = sub.add_parser("branching", parents=[common], help="certify a trunk/branch pair on the hat surface")
    p.add_argument("--split", type=float, default=math.pi / 2, help="arclength where the branch leaves the seam")
    p.add_argument("--length", type=float, default=math.pi)
    p.add_argument("--turn", type=float, default=0.0, help="kink angle away from the tangent (0 = tangent branch)")
    p.add_argument("--sheet", type=int, choices=(1, -1), default=1)
    p.set_defaults(func=cmd_branching, surface_default="paper-hat")

    p = sub.add_parser("heat-kernel", parents=[common], help="heat kernel from a source point")
    p.add_argument("source", type=_point, help="r,theta")
    p.add_argument("--times", type=_floats, default=(0.01, 0.05, 0.1))
    p.add_argument("--n-theta", type=int, default=64, help="angular samples per row in the CSV")
    p.add_argument("--stride", type=int, default=4, help="write every n-th radial row to the CSV")
    p.add_argument("--binary", action="store_true", help="also write kernel.bin")
    p.set_defaults(func=cmd_heat_kernel)

    p = sub.add_parser("smooth", parents=[common], help="heat smoothing of the conformal factor")
    p.add_argument("--eps", type=_floats, default=None)
    p.set_defaults(func=cmd_smooth)

    p = sub.add_parser("kato", parents=[common], help="Kato constants and the sqrt(T) fit")
    p.add_argument("--eps", type=float, default=None, help="use the smoothing at this eps instead of [surface]")
    p.add_argument("--times", type=_floats, default=None)
    p.set_defaults(func=cmd_kato)

    p = sub.add_parser("certify", parents=[common], help="strong-Kato-limit certificate for a family")
    p.add_argument("--family", choices=("paper", "constant", "collapsed"), default="paper")
    p.add_argument("--eps", type=_floats, default=None)
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("report", parents=[common], help="run the acceptance checks")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("show-config", parents=[common], help="print the effective configuration")
    p.set_defaults(func=cmd_show_config)
    return parser


def _config_from_args(args) -> ExperimentConfig:
    overrides: dict[str, dict[str, str]] = {}
    if args.out:
        overrides.setdefault("output", {})["dir"] = args.out
    if args.seed is not None:
        overrides.setdefault("output", {})["seed"] = str(args.seed)
    kind = args.surface or (getattr(args, "surface_default", None) if not args.config else None)
    if kind:
        overrides.setdefault("surface", {})["kind"] = kind
    return load_config(args.config, overrides=overrides, tol_scale=args.tol_scale)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _config_from_args(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return ExitCode.CONFIG
    try:
        return int(args.func(cfg, args))
    except KeyError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return ExitCode.USAGE
    except (geo.GeodesicError, heat.HeatRefinementError, GeometryError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return ExitCode.SOLVER
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return ExitCode.CONFIG
    except OSError as exc:
        print(f"output error: {exc}", file=sys.stderr)
        return ExitCode.OUTPUT
    except ValueError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return ExitCode.SOLVER
    except Exception as exc:  # pragma: no cover - last resort
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return ExitCode.INTERNAL


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

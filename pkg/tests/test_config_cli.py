import json
import math

import pytest

from katobranch import cli
from katobranch.cli import ExitCode, main
from katobranch.config import ConfigError, load_config


# --- configuration ---------------------------------------------------------------


def test_defaults_validate():
    cfg = load_config()
    assert cfg.get("surface", "kind") == "paper-hat"
    assert cfg.eps == (0.1, 0.05, 0.025, 0.0125)
    assert cfg.getfloat("smoothing", "L") == pytest.approx(math.log(2))


def test_file_overrides_defaults(tmp_path):
    p = tmp_path / "c.ini"
    p.write_text("[kato]\nT = 0.1\n[output]\nseed = 7\n")
    cfg = load_config(p)
    assert cfg.getfloat("kato", "T") == 0.1
    assert cfg.seed == 7


def test_tol_scale_skips_wall_clock_budgets():
    cfg = load_config(tol_scale=2.0)
    assert cfg.tol("distance") == pytest.approx(2e-6)
    assert cfg.tol("certify_seconds") == 900


@pytest.mark.parametrize(
    "section,key,value",
    [
        ("kato", "T", "0.5"),
        ("smoothing", "eps", "0.1, 2.0"),
        ("grids", "dt_max", "0"),
        ("surface", "kind", "torus"),
        ("kato", "t_grid", "-1"),
    ],
)
def test_invalid_values_rejected(section, key, value):
    with pytest.raises(ConfigError):
        load_config(overrides={section: {key: value}})


def test_missing_file_rejected(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.ini")


def test_custom_surface_needs_expressions():
    with pytest.raises(ConfigError):
        load_config(overrides={"surface": {"kind": "custom"}})
    cfg = load_config(overrides={"surface": {"kind": "custom", "expressions": "cosh(t)"}})
    assert cfg.surface().gaussian_curvature(0.3) == pytest.approx(-1.0)


def test_dumps_roundtrip(tmp_path):
    cfg = load_config(overrides={"kato": {"T": "0.2"}})
    p = tmp_path / "dump.ini"
    p.write_text(cfg.dumps())
    assert load_config(p).as_dict() == cfg.as_dict()


# --- command line ------------------------------------------------------------------


def _report(out):
    return json.loads((out / "report.json").read_text())


def test_distance_command(tmp_path, capsys):
    assert main(["distance", "0,0", "0,3.141592653589793", "--out", str(tmp_path)]) == ExitCode.OK
    rep = _report(tmp_path)
    assert rep["result"]["distance"] == pytest.approx(math.pi, abs=1e-9)
    assert (tmp_path / "path.csv").exists() and (tmp_path / "path.svg").exists()


def test_flat_distance(tmp_path):
    assert main(["distance", "0,0", "1,0", "--surface", "flat-cylinder", "--out", str(tmp_path)]) == ExitCode.OK
    assert _report(tmp_path)["result"]["distance"] == pytest.approx(1.0)


def test_branching_certified_and_kinked_rejected(tmp_path):
    assert main(["branching", "--out", str(tmp_path / "a")]) == ExitCode.OK
    assert main(["branching", "--turn", "0.5", "--out", str(tmp_path / "b")]) == ExitCode.CHECK_FAILED


def test_geodesic_command(tmp_path):
    assert main(["geodesic", "0,0", "--length", "2", "--out", str(tmp_path)]) == ExitCode.OK
    assert (tmp_path / "geodesic.csv").read_text().splitlines()[0].startswith("s")


def test_heat_kernel_binary(tmp_path):
    code = main(["heat-kernel", "0,0", "--surface", "flat-cylinder", "--times", "0.01,0.05", "--binary", "--out", str(tmp_path)])
    assert code == ExitCode.OK
    assert (tmp_path / "kernel.bin").read_bytes()[:4] == b"KBHK"
    assert (tmp_path / "kernel.csv").exists()


def test_heat_kernel_time_out_of_range(tmp_path):
    assert main(["heat-kernel", "0,0", "--times", "0.5", "--out", str(tmp_path)]) == ExitCode.SOLVER


def test_bad_config_exit_code(tmp_path):
    p = tmp_path / "bad.ini"
    p.write_text("[kato]\nT = -1\n")
    assert main(["show-config", "--config", str(p)]) == ExitCode.CONFIG


def test_usage_error_exit_code():
    with pytest.raises(SystemExit) as exc:
        main(["distance", "not-a-point", "0,0"])
    assert exc.value.code == ExitCode.USAGE


def test_show_config(capsys):
    assert main(["show-config"]) == ExitCode.OK
    out = capsys.readouterr().out
    assert "[tolerances]" in out and "[kato]" in out


def test_report_filter_selects_checks(tmp_path, capsys):
    assert main(["report", "--check", "3,gauss-bonnet", "--out", str(tmp_path)]) == ExitCode.OK
    out = capsys.readouterr().out
    assert out.count("[PASS]") == 2
    rows = (tmp_path / "checks.csv").read_text().splitlines()
    assert len(rows) == 3


def test_report_unknown_filter(tmp_path):
    assert main(["report", "--check", "nothing-matches", "--out", str(tmp_path)]) == ExitCode.USAGE


def test_zero_tolerance_scale_fails(tmp_path):
    assert main(["report", "--check", "3", "--tol-scale", "0", "--out", str(tmp_path)]) == ExitCode.CHECK_FAILED


def test_unwritable_output(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main(["distance", "0,0", "1,0", "--out", str(blocker / "sub")]) == ExitCode.OUTPUT


@pytest.mark.slow
def test_certify_is_deterministic(tmp_path):
    args = ["certify", "--family", "constant", "--eps", "0.1,0.05", "--seed", "3"]
    assert main(args + ["--out", str(tmp_path / "a")]) == ExitCode.OK
    assert main(args + ["--out", str(tmp_path / "b")]) == ExitCode.OK
    a, b = tmp_path / "a", tmp_path / "b"
    assert (a / "kato_rows.csv").read_bytes() == (b / "kato_rows.csv").read_bytes()
    pa = _report(a)["result"]["distance"]["pairs"]
    assert pa == _report(b)["result"]["distance"]["pairs"]


def test_parser_lists_all_subcommands():
    text = cli.build_parser().format_help()
    for name in ("distance", "geodesic", "branching", "heat-kernel", "smooth", "kato", "certify", "report", "show-config"):
        assert name in text

import json
import os
import subprocess
import sys
from pathlib import Path

import pytest

from pointtransform.cli import main, sinh_coefficient_table, write_atomic
from pointtransform.config import ALL_CHECKS, load_config, parse_config
from pointtransform.demos import DEMO_FILES, DEMOS
from pointtransform.errors import ConfigError

REPO = Path(__file__).resolve().parents[1]
MINIMAL = """
[map]
dimension = 1
forward = sinh(x1)
[checks]
run = lemma
"""


class TestConfig:
    @pytest.mark.parametrize("name", sorted(DEMO_FILES))
    def test_demo_files_match_embedded(self, name):
        assert (REPO / "demos" / DEMO_FILES[name]).read_text() == DEMOS[name]

    def test_sinh_demo_file(self):
        cfg = load_config(REPO / "demos" / "sinh.cfg")
        assert cfg.n == 1 and cfg.forward == ["sinh(x1)"] and cfg.inverse == ["asinh(x1)"]
        assert cfg.checks == list(ALL_CHECKS)
        assert len(cfg.grid_levels()) == 4
        assert cfg.spectral_levels[0] == ([(-10.0, 10.0)], 201)

    def test_defaults(self):
        cfg = parse_config(MINIMAL)
        assert cfg.seed == 42 and cfg.j_min == 1e-8

    def test_missing_forward(self):
        with pytest.raises(ConfigError) as info:
            parse_config("[map]\ndimension = 2\n")
        assert info.value.field == "map.forward"
        assert "map.forward" in str(info.value)

    def test_dimension_mismatch(self):
        with pytest.raises(ConfigError) as info:
            parse_config("[map]\ndimension = 2\nforward = sinh(x1)\n")
        assert info.value.field == "map.forward"

    @pytest.mark.parametrize("text, field", [
        ("[map]\ndimension = 1\nforward = x1\nfoo = 1\n", "map.foo"),
        ("[map]\ndimension = 1\nforward = x1\n[extra]\na = 1\n", "extra"),
        ("[map]\ndimension = 1\nforward = x1 +\n", "map"),
        ("[map]\ndimension = one\nforward = x1\n", "map.dimension"),
        ("[map]\ndimension = 1\nforward = x1\n[checks]\nrun = lemma bogus\n", "checks.run"),
        ("[map]\ndimension = 1\nforward = x1\n[grid]\ncounts = 2\n", "grid.counts"),
        ("[map]\ndimension = 1\nforward = x1\n[grid]\nbounds = 3 1\n", "grid.bounds"),
        ("[map]\ndimension = 1\nforward = x1\n[bumps]\nb = 0\n", "bumps.b"),
        ("[map]\ndimension = 1\nforward = x1\n[unitary]\nbumps = nope\n", "unitary.bumps"),
        ("[map]\ndimension = 1\nforward = x1\n[output]\nformat = xml\n", "output.format"),
        ("[map]\ndimension = 1\nforward = x1\nj_min = 0\n", "j_min"),
        ("[map]\ndimension = 1\nforward = x1\n[checks]\nrun = ccr\n", "bumps"),
    ])
    def test_errors_name_the_field(self, text, field):
        with pytest.raises(ConfigError) as info:
            parse_config(text)
        assert info.value.field == field

    def test_per_axis_values(self):
        cfg = parse_config("""
[map]
dimension = 2
forward = x1 ; x2 + x1
[checks]
run = ccr
[grid]
bounds = -1 1 ; -2 2
counts = 11 21
refinements = 1
[bumps]
b = 0 0 ; 0.5 1
""")
        g0, g1 = cfg.grid_levels()
        assert g0.bounds == ((-1.0, 1.0), (-2.0, 2.0)) and g0.counts == (11, 21)
        assert g1.counts == (21, 41)
        assert cfg.bumps[0].radius == (0.5, 1.0)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "missing.cfg")


class TestCLI:
    def test_run_sinh(self, tmp_path, capsys):
        out = tmp_path / "r.json"
        assert main(["run", str(REPO / "demos" / "sinh.cfg"), "--out", str(out)]) == 0
        rep = json.loads(out.read_text())
        assert rep["overall_pass"] is True
        assert set(rep) == {"config", "checks", "overall_pass", "started_at", "finished_at"}
        assert {"name", "residuals", "tolerance", "pass", "runtime_ms"} <= set(rep["checks"][0])

    def test_run_polar(self, tmp_path):
        out = tmp_path / "p.json"
        assert main(["run", str(REPO / "demos" / "polar.cfg"), "--out", str(out)]) == 1
        rep = json.loads(out.read_text())
        assert rep["checks"][0]["name"] == "validate_global"
        assert rep["checks"][0]["pass"] is False

    def test_run_missing(self, tmp_path):
        assert main(["run", str(tmp_path / "missing.cfg")]) == 2

    def test_bad_arguments(self):
        assert main(["run"]) == 2
        assert main(["demo", "nope"]) == 2

    def test_csv_and_seed(self, tmp_path):
        cfg = tmp_path / "c.cfg"
        cfg.write_text(MINIMAL)
        out = tmp_path / "c.csv"
        assert main(["run", str(cfg), "--out", str(out), "--format", "csv", "--seed", "5"]) == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "check,kind,residual,value,tolerance,pass"
        assert lines[1].startswith("lemma_jacobian_derivative,check,relative_gap,")

    def test_default_output_path(self, tmp_path, monkeypatch):
        cfg = tmp_path / "mini.cfg"
        cfg.write_text(MINIMAL)
        monkeypatch.chdir(tmp_path)
        assert main(["run", str(cfg)]) == 0
        assert (tmp_path / "mini-report.json").exists()

    def test_print_operator(self, capsys):
        assert main(["print-operator", str(REPO / "demos" / "sinh.cfg"), "--alpha", "1"]) == 0
        out = capsys.readouterr().out
        assert "c_1(x) = dx1/dX1 = 1.0/cosh(x1)" in out
        assert "b1(x) = -(sinh(x1)/cosh(x1)^2)" in out

    def test_print_operator_bad_alpha(self):
        assert main(["print-operator", str(REPO / "demos" / "sinh.cfg"), "--alpha", "2"]) == 2

    def test_demo_polar(self, capsys):
        assert main(["demo", "polar-fail"]) == 1
        out = capsys.readouterr().out
        assert "SingularJacobian" in out and "(0.0, 0.0)" in out

    def test_demo_shear2d(self, capsys):
        assert main(["demo", "shear2d"]) == 0
        assert "overall: PASS" in capsys.readouterr().out

    def test_sinh_coefficients(self):
        _, _, gap = sinh_coefficient_table()
        assert gap <= 1e-12

    def test_module_entry_point(self, tmp_path):
        proc = subprocess.run([sys.executable, "-m", "pointtransform", "demo", "sinh"],
                              capture_output=True, text=True, cwd=tmp_path)
        assert proc.returncode == 0, proc.stderr
        assert "max discrepancy" in proc.stdout
        assert list(tmp_path.iterdir()) == []      # demos write nothing unless asked


class TestAtomicWrite:
    def test_no_partial_file(self, tmp_path):
        target = tmp_path / "out.json"
        with pytest.raises(TypeError):       # fails while writing the temp file
            write_atomic(target, 12345)
        assert list(tmp_path.iterdir()) == []

    def test_replaces_existing(self, tmp_path):
        target = tmp_path / "out.json"
        target.write_text("old")
        write_atomic(target, "new")
        assert target.read_text() == "new"
        assert os.listdir(tmp_path) == ["out.json"]

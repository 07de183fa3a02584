"""Config parsing, presets, command behavior, exit codes, determinism."""

import numpy as np
import pytest

from hiplab import mesh
from hiplab.cli import (
    ExperimentConfig,
    build_boundary,
    build_sigma,
    main,
    parse_config,
)
from hiplab.errors import ConfigError
from hiplab.mesh import Grid, ScalarField


def write_cfg(tmp_path, text, name="exp.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


BASE = """
# base experiment
n = 24
p = 1.0
sigma = bump(0.2, 0.45, 0.55, 0.03)
boundary = linear-x
seed = 7
"""


class TestParseConfig:
    def test_defaults_and_overrides(self, tmp_path):
        cfg = parse_config(write_cfg(tmp_path, BASE))
        assert cfg.n == 24 and cfg.seed == 7
        assert cfg.sigma.startswith("bump")
        assert cfg.reg_lambda == 1e-8  # default survives

    def test_comments_and_blank_lines(self, tmp_path):
        cfg = parse_config(write_cfg(tmp_path, "\n# only a comment\nn = 8\n"))
        assert cfg.n == 8

    def test_unknown_key(self, tmp_path):
        with pytest.raises(ConfigError, match="unknown key"):
            parse_config(write_cfg(tmp_path, "banana = 3\n"))

    def test_bad_value(self, tmp_path):
        with pytest.raises(ConfigError, match="bad value"):
            parse_config(write_cfg(tmp_path, "n = many\n"))

    def test_missing_equals(self, tmp_path):
        with pytest.raises(ConfigError, match="key=value"):
            parse_config(write_cfg(tmp_path, "just a line\n"))

    def test_p_domain(self, tmp_path):
        with pytest.raises(ConfigError, match="p must lie"):
            parse_config(write_cfg(tmp_path, "p = 1.5\n"))

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            parse_config(tmp_path / "nope.cfg")

    def test_levels_list(self, tmp_path):
        cfg = parse_config(write_cfg(tmp_path, "levels = 1e-4, 1e-3\n"))
        assert cfg.levels == (1e-4, 1e-3)


class TestPresets:
    def test_constant(self):
        grid = Grid(8)
        sigma = build_sigma("constant(2.5)", grid)
        assert np.all(sigma.field.values == 2.5)

    def test_bump_and_expx(self):
        grid = Grid(8)
        b = build_sigma("bump(0.3, 0.5, 0.5, 0.1)", grid)
        assert b.field.values.max() <= 1.3 + 1e-12
        e = build_sigma("expx", grid)
        X, _ = grid.coords()
        np.testing.assert_allclose(e.field.values, np.exp(X))

    def test_from_file(self, tmp_path):
        grid = Grid(8)
        f = ScalarField.constant(grid, 1.5)
        path = tmp_path / "sig.field"
        mesh.write_field(path, f)
        sigma = build_sigma(f"from-file({path})", grid)
        assert np.all(sigma.field.values == 1.5)

    def test_from_file_wrong_grid(self, tmp_path):
        path = tmp_path / "sig.field"
        mesh.write_field(path, ScalarField.constant(Grid(16), 1.0))
        with pytest.raises(ConfigError, match="n=16"):
            build_sigma(f"from-file({path})", Grid(8))

    def test_unknown_preset(self):
        with pytest.raises(ConfigError):
            build_sigma("fractal", Grid(8))

    def test_boundary_presets(self):
        grid = Grid(8)
        X, Y = grid.coords()
        np.testing.assert_allclose(build_boundary("linear-x", grid).values, X)
        np.testing.assert_allclose(
            build_boundary("affine(2, -1)", grid).values, 2 * X - Y
        )
        with pytest.raises(ConfigError):
            build_boundary("circular", grid)


class TestCommands:
    def test_plan(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, "theta = 0.5\np = 1.0\n")
        rc = main(["plan", "--config", cfg, "--out", str(tmp_path / "out")])
        assert rc == 0
        text = capsys.readouterr().out
        assert "beta=0.75" in text and "s=54" in text
        assert (tmp_path / "out" / "plan.txt").read_text() == text

    def test_forward_writes_fields(self, tmp_path):
        cfg = write_cfg(tmp_path, BASE)
        out = tmp_path / "fwd"
        assert main(["forward", "--config", cfg, "--out", str(out)]) == 0
        u = mesh.read_field(out / "u.field")
        data = mesh.read_field(out / "data.field")
        assert u.grid.n == 24 and np.all(np.isfinite(data.values))
        summary = (out / "summary.txt").read_text()
        assert "min_grad=" in summary

    def test_forward_constant_sigma(self, tmp_path):
        cfg = write_cfg(tmp_path, "n = 16\nsigma = constant(1.0)\n")
        out = tmp_path / "fwd"
        assert main(["forward", "--config", cfg, "--out", str(out)]) == 0
        data = mesh.read_field(out / "data.field")
        np.testing.assert_allclose(data.values, 1.0, atol=1e-9)

    def test_verify_passes_on_base(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, BASE)
        rc = main(["verify", "--config", cfg, "--out", str(tmp_path / "v")])
        out = capsys.readouterr().out
        assert rc == 0
        assert "FAIL" not in out and "PASS" in out

    def test_reconstruct_deterministic(self, tmp_path):
        cfg = write_cfg(tmp_path, BASE + "sigma_init = constant(1.0)\np = 0.5\n")
        out1, out2 = tmp_path / "r1", tmp_path / "r2"
        assert main(["reconstruct", "--config", cfg, "--out", str(out1)]) == 0
        assert main(["reconstruct", "--config", cfg, "--out", str(out2)]) == 0
        assert (out1 / "sigma_rec.field").read_bytes() == (
            out2 / "sigma_rec.field"
        ).read_bytes()
        assert (out1 / "iterates.csv").read_text() == (out2 / "iterates.csv").read_text()
        header = (out1 / "iterates.csv").read_text().splitlines()[0]
        assert header == "label,eps,l2_h,h1_dF,hs1_h,rec_err,extra"


class TestExitCodes:
    def test_config_error_is_2(self, tmp_path):
        cfg = write_cfg(tmp_path, "p = 1.5\n")
        assert main(["forward", "--config", cfg, "--out", str(tmp_path)]) == 2

    def test_missing_config_is_2(self, tmp_path):
        assert main(["forward", "--config", str(tmp_path / "x.cfg")]) == 2

    def test_gradient_floor_is_3(self, tmp_path):
        cfg = write_cfg(tmp_path, "n = 16\ngrad_floor = 10\n")
        assert main(["forward", "--config", cfg, "--out", str(tmp_path)]) == 3

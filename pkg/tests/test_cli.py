"""CLI tests: config resolution, run outputs, exit codes, suites."""

import math
import subprocess
import sys

import numpy as np
import pytest

from xgnn.cli import (
    ConfigError,
    emit_config,
    main,
    parse_config_text,
    pencil_rows,
    resolve_config,
    run_suite,
    write_pencil_csv,
)
from xgnn.presets import LAMBDA_EDDY, LAMBDA_REENTRANT

TINY = """
[quad]
interior_n = 12
boundary_n = 6

[train]
width_base = 5
gradient_steps = 8

[output]
grid_n = 10
"""


def write_cfg(tmp_path, text=TINY, name="run.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


class TestParseConfig:
    def test_sections_and_comments(self):
        raw = parse_config_text(
            "# comment\npreset = example_3_2\n\n[form]\ndelta = 100\n[train]\nseed=4\n"
        )
        assert raw == {"preset": "example_3_2", "form.delta": "100", "train.seed": "4"}

    def test_missing_equals(self):
        with pytest.raises(ConfigError, match="line 2"):
            parse_config_text("a = 1\nnonsense\n")


class TestResolveConfig:
    def test_preset_defaults(self):
        r = resolve_config("example_3_2")
        assert r["form.delta"] == 1000.0
        assert r["form.beta"] == pytest.approx(4 / 3)
        assert r["train.lr_base"] == pytest.approx(4e-3)
        assert r["quad.interior_n"] == 128
        assert r["preset.M"] == 20
        assert r["output.fields"] is True

    def test_file_and_cli_overrides(self, tmp_path):
        path = write_cfg(tmp_path, "form.delta = 100\ntrain.seed = 2\n")
        r = resolve_config("example_3_2", path, {"train.seed": 9})
        assert r["form.delta"] == 100.0
        assert r["train.seed"] == 9

    def test_preset_param_typed(self, tmp_path):
        path = write_cfg(tmp_path, "preset.M = 4\n")
        r = resolve_config("example_3_2", path)
        assert r["preset.M"] == 4
        path2 = write_cfg(tmp_path, "preset.s = 2.5\npreset.m = 4\n", "b.cfg")
        r2 = resolve_config("example_2_2", path2)
        assert r2["preset.s"] == 2.5 and r2["preset.m"] == 4

    def test_bool_values(self, tmp_path):
        path = write_cfg(tmp_path, "output.fields = false\noutput.timings = true\n")
        r = resolve_config("example_3_1", path)
        assert r["output.fields"] is False
        assert r["output.timings"] is True

    @pytest.mark.parametrize(
        "text,fragment",
        [
            ("quad.nope = 1\n", "quad.nope"),
            ("quad.interior_n = -1\n", "quad.interior_n"),
            ("train.seed = abc\n", "train.seed"),
            ("form.sb = 2\n", "form.sb"),
            ("preset.M = 1.5\n", "preset.M"),
            ("preset.zz = 1\n", "preset.zz"),
        ],
    )
    def test_rejections_name_the_key(self, tmp_path, text, fragment):
        path = write_cfg(tmp_path, text)
        with pytest.raises(ConfigError, match=fragment.replace(".", r"\.")):
            resolve_config("example_3_2", path)

    def test_missing_and_unknown_preset(self):
        with pytest.raises(ConfigError, match="preset"):
            resolve_config(None, None)
        with pytest.raises(ConfigError, match="nope"):
            resolve_config("nope")

    def test_round_trip(self, tmp_path):
        r1 = resolve_config(
            "example_3_2", write_cfg(tmp_path), {"train.max_basis": 2}
        )
        path = tmp_path / "echo.cfg"
        path.write_text(emit_config(r1))
        r2 = resolve_config(None, str(path))
        assert r1 == r2


def run_main(args):
    return main([str(a) for a in args])


class TestRunCommand:
    def test_run_without_exact_solution(self, tmp_path):
        cfg = write_cfg(tmp_path)
        out = tmp_path / "out"
        code = run_main(
            ["run", "--preset", "example_3_2", "--config", cfg,
             "--max-basis", 2, "--seed", 3, "--out", out]
        )
        assert code == 0
        lines = (out / "history.csv").read_text().splitlines()
        assert lines[0] == "iter,eta,energy_error,l2_error,h1_error,h2_error,width,lr,seconds"
        assert len(lines) == 3
        first = lines[1].split(",")
        assert first[0] == "1" and float(first[1]) > 0
        assert first[2] == first[3] == first[4] == first[5] == ""
        assert (out / "mu_trace.csv").read_text() == "step,term_id,re_mu,im_mu\n"
        assert (out / "config.txt").exists()

    def test_error_columns_with_exact_solution(self, tmp_path):
        cfg = write_cfg(tmp_path)
        out = tmp_path / "out"
        assert run_main(
            ["run", "--preset", "example_3_1", "--config", cfg,
             "--max-basis", 1, "--out", out]
        ) == 0
        row = (out / "history.csv").read_text().splitlines()[1].split(",")
        for cell in row[1:6]:
            assert float(cell) > 0

    def test_zero_iterations(self, tmp_path):
        out = tmp_path / "out"
        assert run_main(
            ["run", "--preset", "example_3_2", "--config", write_cfg(tmp_path),
             "--max-basis", 0, "--out", out]
        ) == 0
        assert (out / "history.csv").read_text().splitlines() == [
            "iter,eta,energy_error,l2_error,h1_error,h2_error,width,lr,seconds"
        ]
        assert not list(out.glob("field_*"))

    def test_byte_identical_reruns(self, tmp_path):
        cfg = write_cfg(tmp_path)
        outs = []
        for name in ("a", "b"):
            out = tmp_path / name
            assert run_main(
                ["run", "--preset", "example_3_1", "--config", cfg,
                 "--max-basis", 2, "--seed", 7, "--out", out]
            ) == 0
            outs.append(out)
        for fname in ("history.csv", "mu_trace.csv", "field_u_iter2.csv"):
            assert (outs[0] / fname).read_bytes() == (outs[1] / fname).read_bytes()

    def test_field_grid_masks_outside(self, tmp_path):
        cfg = write_cfg(tmp_path)
        out = tmp_path / "out"
        assert run_main(
            ["run", "--preset", "example_3_2", "--config", cfg,
             "--max-basis", 1, "--out", out]
        ) == 0
        data = np.genfromtxt(out / "field_u_iter1.csv", delimiter=",", skip_header=1)
        assert data.shape == (100, 3)
        inside = ~np.isnan(data[:, 2])
        assert 0 < inside.sum() < 100
        bad = data[(data[:, 0] > 0.2) & (data[:, 1] < -0.2)]
        assert np.isnan(bad[:, 2]).all()

    def test_seed_sweep(self, tmp_path, monkeypatch):
        monkeypatch.setenv("XGNN_THREADS", "2")
        cfg = write_cfg(tmp_path)
        out = tmp_path / "sweep"
        assert run_main(
            ["run", "--preset", "example_3_2", "--config", cfg,
             "--max-basis", 1, "--seeds", "4..6", "--out", out]
        ) == 0
        for s in (4, 5, 6):
            sub = out / f"seed_{s}"
            assert (sub / "history.csv").exists()
            assert f"seed = {s}" in (sub / "config.txt").read_text()
        h4 = (out / "seed_4" / "history.csv").read_text()
        h5 = (out / "seed_5" / "history.csv").read_text()
        assert h4 != h5

    def test_mu_trace_rows(self, tmp_path):
        cfg = write_cfg(tmp_path)
        out = tmp_path / "out"
        assert run_main(
            ["run", "--preset", "example_4_1", "--config", cfg,
             "--max-basis", 2, "--seed", 2, "--out", out]
        ) == 0
        data = np.genfromtxt(out / "mu_trace.csv", delimiter=",", skip_header=1)
        assert data.shape == (16, 4)
        steps = data[:, 0].astype(int)
        assert (np.diff(steps) > 0).all()
        assert (data[:, 1] == 0).all()
        assert (data[:, 3] == 0).all()
        assert 0 < data[-1, 2] < 1

    @pytest.mark.parametrize(
        "args",
        [
            ["run", "--preset", "nope"],
            ["run", "--preset", "example_3_2", "--config", "/does/not/exist.cfg"],
            ["run", "--preset", "example_3_2", "--seeds", "notarange"],
            ["run", "--preset", "example_3_2", "--seeds", "5..3"],
        ],
    )
    def test_configuration_errors_exit_2(self, args, capsys):
        assert run_main(args) == 2
        assert "error" in capsys.readouterr().err

    def test_bad_threads_env(self, tmp_path, monkeypatch):
        monkeypatch.setenv("XGNN_THREADS", "zero")
        assert run_main(
            ["run", "--preset", "example_3_2", "--config", write_cfg(tmp_path),
             "--max-basis", 1, "--seeds", "1..2", "--out", tmp_path / "s"]
        ) == 2

    def test_seed_and_seeds_conflict(self):
        with pytest.raises(SystemExit):
            main(["run", "--preset", "example_3_2", "--seed", "1", "--seeds", "1..2"])


class TestPencilCommand:
    def test_laplace_rows(self):
        rows = pencil_rows(1.5 * math.pi, operator="laplace", count=3)
        assert rows[0][1] == 2 / 3
        assert all(im == 0.0 for _, _, im, _ in rows)

    def test_biharmonic_real_and_complex(self):
        alpha = math.pi + math.atan(3.0)
        rows = pencil_rows(alpha, count=1)
        assert rows[0][1] == pytest.approx(LAMBDA_REENTRANT, abs=1e-12)
        assert rows[0][3] < 1e-10
        tip = 2.0 * math.atan(1.0 / 3.0)
        crows = pencil_rows(tip, want_complex=True, count=1)
        assert complex(crows[0][1], crows[0][2]) == pytest.approx(
            LAMBDA_EDDY, abs=1e-8
        )

    def test_alpha_validation(self):
        with pytest.raises(ConfigError, match="alpha"):
            pencil_rows(-1.0)

    def test_csv_written_with_full_precision(self, tmp_path):
        alpha = math.pi + math.atan(3.0)
        rows = pencil_rows(alpha, count=1)
        path = write_pencil_csv(rows, str(tmp_path))
        lines = open(path).read().splitlines()
        assert lines[0] == "alpha,re_lambda,im_lambda,residual"
        cells = lines[1].split(",")
        assert float(cells[0]) == alpha
        assert float(cells[1]) == rows[0][1]

    def test_command_prints_and_writes(self, tmp_path, capsys):
        assert run_main(
            ["pencil", "--alpha", math.pi + math.atan(3.0), "--count", 1,
             "--out", tmp_path]
        ) == 0
        assert "1.58223874" in capsys.readouterr().out
        assert (tmp_path / "pencil.csv").exists()

    def test_too_many_roots_is_numerical_abort(self, capsys):
        assert run_main(
            ["pencil", "--alpha", math.pi + math.atan(3.0), "--count", 40]
        ) == 1
        assert "root search" in capsys.readouterr().err


class TestValidateCommand:
    def test_all_suites_pass(self):
        checks, ok = run_suite("all")
        assert ok, [c for c in checks if not c[1]]
        assert len(checks) >= 10

    def test_command_output(self, capsys):
        assert run_main(["validate", "--suite", "pencil"]) == 0
        out = capsys.readouterr().out
        assert out.count("PASS") >= 3 and "FAIL" not in out


def test_module_entry_point():
    proc = subprocess.run(
        [sys.executable, "-m", "xgnn", "--help"], capture_output=True, text=True
    )
    assert proc.returncode == 0
    assert "run" in proc.stdout and "pencil" in proc.stdout

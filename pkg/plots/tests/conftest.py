import subprocess
import sys

import pytest

TINY_CFG = """
[quad]
interior_n = 12
boundary_n = 6

[train]
width_base = 4
gradient_steps = 6

[output]
grid_n = 24
"""


def xgnn_run(out_dir, cfg_path, *extra):
    cmd = [
        sys.executable, "-m", "xgnn", "run",
        "--config", str(cfg_path), "--out", str(out_dir), *map(str, extra),
    ]
    proc = subprocess.run(cmd, capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    return out_dir


@pytest.fixture(scope="session")
def cfg_path(tmp_path_factory):
    path = tmp_path_factory.mktemp("cfg") / "tiny.cfg"
    path.write_text(TINY_CFG)
    return path


@pytest.fixture(scope="session")
def poisson_run(tmp_path_factory, cfg_path):
    out = tmp_path_factory.mktemp("runs") / "poisson"
    return xgnn_run(out, cfg_path, "--preset", "example_3_1",
                    "--max-basis", 2, "--seed", 1)


@pytest.fixture(scope="session")
def stokes_run(tmp_path_factory, cfg_path):
    out = tmp_path_factory.mktemp("runs") / "stokes"
    return xgnn_run(out, cfg_path, "--preset", "example_4_3",
                    "--max-basis", 1, "--seed", 1)


@pytest.fixture(scope="session")
def sweep_run(tmp_path_factory, cfg_path):
    out = tmp_path_factory.mktemp("runs") / "sweep"
    return xgnn_run(out, cfg_path, "--preset", "example_4_1",
                    "--max-basis", 1, "--seeds", "0..1")

import os
import subprocess
import sys
import textwrap

import numpy as np
import pytest

from singular_pnp import cli
from singular_pnp.errors import LinearSolverDivergence
from singular_pnp.output import read_diagnostics, read_field_csv


def cfg_file(tmp_path, body, name="run.cfg"):
    path = tmp_path / name
    path.write_text(textwrap.dedent(body))
    return str(path)


SMALL = """\
grid = 16
charges = [(0.375, 0.5, 0.5), (0.625, 0.5, -0.5)]
[initial]
c_n = gaussian((0.4, 0.6), 0.1, 0.33)
c_p = gaussian((0.6, 0.4), 0.1, 0.33)
[scheme]
dt = 0.01
t_end = 0.05
[output]
snapshot_every = 2
out_dir = "out"
"""


def test_zero_data_run(tmp_path):
    body = SMALL.replace("gaussian((0.4, 0.6), 0.1, 0.33)", "constant(0)")
    body = body.replace("gaussian((0.6, 0.4), 0.1, 0.33)", "0")
    assert cli.main(["--config", cfg_file(tmp_path, body), "--quiet"]) == cli.EXIT_OK
    rows = read_diagnostics(str(tmp_path / "out" / "diagnostics.csv"))
    assert len(rows) == 6
    for r in rows:
        for k in ("mass_u", "mass_v", "l2w_u", "l2winv_v", "h1w_u", "h1winv_v", "H", "E", "D"):
            assert r[k] == 0.0
    out = sorted(os.listdir(tmp_path / "out"))
    assert "u_000000.csv" in out and "snapshot_000004.vtk" in out and "phi_000005.csv" in out


def test_runs_are_byte_identical(tmp_path):
    path = cfg_file(tmp_path, SMALL)
    assert cli.main(["--config", path, "--out-dir", str(tmp_path / "a"), "--quiet"]) == 0
    assert cli.main(["--config", path, "--out-dir", str(tmp_path / "b"), "--quiet"]) == 0
    names = sorted(os.listdir(tmp_path / "a"))
    assert names == sorted(os.listdir(tmp_path / "b"))
    for n in names:
        assert (tmp_path / "a" / n).read_bytes() == (tmp_path / "b" / n).read_bytes(), n


def test_snapshot_reread_and_redump_is_identical(tmp_path):
    path = cfg_file(tmp_path, SMALL)
    assert cli.main(["--config", path, "--quiet"]) == 0
    from singular_pnp.output import write_field_csv

    src = tmp_path / "out" / "c_n_000004.csv"
    name, vals, t = read_field_csv(str(src))
    write_field_csv(str(tmp_path / "again.csv"), name, vals, t)
    assert (tmp_path / "again.csv").read_bytes() == src.read_bytes()


def test_picard_failure_exit_code(tmp_path):
    # large unipolar data with one huge step: no fixed point even after ten halvings
    body = """\
    grid = 16
    charges = [(0.375, 0.5, 0.5), (0.625, 0.5, -0.5)]
    [initial]
    c_n = gaussian((0.3, 0.3), 0.1, 1e4)
    c_p = 0
    [scheme]
    dt = 1.0
    t_end = 1.0
    """
    assert cli.main(["--config", cfg_file(tmp_path, body), "--quiet"]) == cli.EXIT_PICARD


def test_linear_failure_exit_code(tmp_path, monkeypatch):
    from singular_pnp import linalg

    def boom(self, A, b, tol):
        raise LinearSolverDivergence("forced")

    monkeypatch.setattr(linalg.LaggedLUSolver, "solve", boom)
    assert cli.main(["--config", cfg_file(tmp_path, SMALL), "--quiet"]) == cli.EXIT_LINEAR


@pytest.mark.parametrize("body", [
    SMALL + "[scheme]\ndtt = 1\n",
    SMALL.replace("grid = 16", "grid = 2"),
    SMALL.replace("(0.375, 0.5, 0.5)", "(0.0, 0.5, 0.5)"),
])
def test_config_errors_exit_1(tmp_path, body):
    assert cli.main(["--config", cfg_file(tmp_path, body), "--quiet"]) == cli.EXIT_CONFIG


def test_missing_config_exit_1(tmp_path):
    assert cli.main(["--config", str(tmp_path / "none.cfg"), "--quiet"]) == cli.EXIT_CONFIG


def test_validate_mode(tmp_path, capsys):
    code = cli.main(["--config", cfg_file(tmp_path, SMALL), "--mode", "validate", "--quiet"])
    assert code == cli.EXIT_OK
    text = (tmp_path / "out" / "validation.txt").read_text()
    assert text.strip().endswith("all asserted invariants pass")
    assert "PASS mass conservation" in capsys.readouterr().out


def test_validate_centered_negativity_is_monitored(tmp_path):
    body = """\
    grid = 8
    charges = [(0.3, 0.5, 0.8), (0.7, 0.5, -0.8)]
    [initial]
    c_n = gaussian((0.25, 0.25), 0.1, 1000)
    c_p = gaussian((0.75, 0.75), 0.1, 1000)
    [scheme]
    dt = 0.002
    t_end = 0.008
    flux = centered
    """
    code = cli.main(["--config", cfg_file(tmp_path, body), "--mode", "validate", "--quiet"])
    text = (tmp_path / "out" / "validation.txt").read_text()
    assert "WARN nonnegativity (monitored)" in text
    assert code == cli.EXIT_OK


def test_validate_without_charges_matches_unweighted(tmp_path):
    from singular_pnp.config import parse_config
    from singular_pnp.evolution import run
    from singular_pnp.transform import prepare_initial
    from singular_pnp.validation import run_validation_suite
    from singular_pnp.weights import prepare_weights

    cfg = parse_config(cfg_file(tmp_path, SMALL.replace(
        "charges = [(0.375, 0.5, 0.5), (0.625, 0.5, -0.5)]", "charges = []")))
    grid = cfg.make_grid()
    W = prepare_weights([], 0.0, grid)
    c_n, c_p = cfg.initial_fields(grid)
    init = prepare_initial(c_n, c_p, W)
    traj = run(init, cfg.scheme(), W)
    report = run_validation_suite(cfg, trajectory=traj, weights=W, initial=init)
    assert report.passed
    last, rec = traj.snapshots[-1], traj.diagnostics[-1]
    assert rec.mass_u == pytest.approx(last.u.sum() * grid.cell_area, rel=1e-15)
    assert rec.l2w_u == pytest.approx(np.sqrt((last.u ** 2).sum() * grid.cell_area), rel=1e-14)


def test_oracle_mode(tmp_path):
    body = SMALL + "[oracle]\nradii = [0.2, 0.1]\n"
    assert cli.main(["--config", cfg_file(tmp_path, body), "--mode", "oracle", "--quiet"]) == 0
    lines = (tmp_path / "out" / "oracle_report.txt").read_text().splitlines()
    assert lines[0] == "exclusion radius 0.1" and len(lines) == 5


def test_module_entry_point(tmp_path):
    body = SMALL.replace("t_end = 0.05", "t_end = 0.01")
    res = subprocess.run([sys.executable, "-m", "singular_pnp", "--config", cfg_file(tmp_path, body)],
                         capture_output=True, text=True, env={**os.environ, "PNP_NUM_THREADS": "1"})
    assert res.returncode == 0, res.stderr
    assert "config: scheme.dt = 0.01" in res.stderr
    assert (tmp_path / "out" / "diagnostics.csv").exists()

import json
import math
import subprocess
import sys

import numpy as np
import pytest

from tvflow import FlowConfig, ScalarField, SolverParams, build_uniform_mesh, run_flow
from tvflow import io
from tvflow.cli import main, parse_number
from tvflow.experiments import ConfigError, run_experiment
from tvflow.errors import eoc_table


def small_trace():
    mesh = build_uniform_mesh([(0.0, 1.0)], 8, "interval")
    u0 = ScalarField(mesh, (mesh.vertices[:, 0] > 0.5).astype(float))
    return run_flow(u0, FlowConfig(0.05), SolverParams.stable(mesh, 0.01))


def test_trace_csv_roundtrip(tmp_path):
    tr = small_trace()
    path = io.write_trace_csv(tr, tmp_path / "t.csv")
    first = path.read_text().splitlines()[0]
    assert first == "time,energy,sup_norm,inner_iters,stop_v,stop_r"
    header, data = io.read_csv(path)
    assert tuple(header) == io.TRACE_COLUMNS
    np.testing.assert_array_equal(data[:, 0], tr.times)
    np.testing.assert_array_equal(data[:, 1], tr.energies)
    np.testing.assert_array_equal(data[:, 3], tr.inner_iters)
    assert math.isnan(data[0, 4])


def test_table_csv(tmp_path):
    rep = eoc_table([0.4, 0.2], [0.5, 0.25])
    header, data = io.read_csv(io.write_table_csv(rep, tmp_path / "tab.csv"))
    assert header == ["h", "error", "order"]
    assert data.shape == (2, 3) and data[1, 2] == 1.0


@pytest.mark.parametrize("kind,domain,n", [("interval", [(0.0, 1.0)], 7),
                                           ("quad", [(-3.0, 3.0), (0.0, 1.0)], (5, 3)),
                                           ("triangle", [(0.0, 1.0), (0.0, 1.0)], 4)])
def test_vtk_roundtrip(kind, domain, n, tmp_path, rng):
    mesh = build_uniform_mesh(domain, n, kind)
    field = ScalarField(mesh, rng.standard_normal(mesh.n_vertices) / 3.0)
    path = io.write_vtk(field, tmp_path / "f.vtk")
    text = path.read_text()
    assert "DATASET STRUCTURED_GRID" in text and "SCALARS u double 1" in text
    back = io.read_vtk(path)
    np.testing.assert_array_equal(back["u"], field.coeffs)
    np.testing.assert_array_equal(back["points"][:, :mesh.dim], mesh.vertices)
    assert int(np.prod(back["dims"])) == mesh.n_vertices


def test_gnuplot_scripts(tmp_path):
    p = io.write_gnuplot(tmp_path / "a.gp", "trace.csv")
    assert "'trace.csv'" in p.read_text()
    p = io.write_gnuplot(tmp_path / "b.gp", "table.csv", "table")
    assert "logscale" in p.read_text()
    with pytest.raises(ValueError):
        io.write_gnuplot(tmp_path / "c.gp", "x.csv", "pie")


def test_load_config(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text("[mesh]\nh = 2^-3\n[solver]\nc-stop-v = 0.01\nsigma=0.2\n")
    assert io.load_config(p) == {"h": "2^-3", "c_stop_v": "0.01", "sigma": "0.2"}
    q = tmp_path / "flat.cfg"
    q.write_text("dt = 0.1\n")
    assert io.load_config(q) == {"dt": "0.1"}


def test_manifest(tmp_path):
    path = io.write_manifest(tmp_path / "m.json", {"a": np.float64(1.5), "b": np.arange(2)})
    data = json.loads(path.read_text())
    assert data["a"] == 1.5 and data["b"] == [0, 1]
    assert set(data["versions"]) >= {"python", "numpy", "scipy", "tvflow"}


def test_parse_number():
    assert parse_number("2^-5") == 2.0 ** -5
    assert parse_number("6*2^-3") == 0.75
    assert parse_number("1e-3") == 1e-3
    import argparse
    with pytest.raises(argparse.ArgumentTypeError):
        parse_number("abc")


def test_run_experiment_rejects_bad_input(tmp_path):
    with pytest.raises(ConfigError):
        run_experiment("nope", {}, tmp_path)
    with pytest.raises(ConfigError):
        run_experiment("ball", {"colour": 1}, tmp_path)
    with pytest.raises(ConfigError):
        run_experiment("ball", {"h": 0.7}, tmp_path)


def test_flow_preset_outputs(tmp_path):
    res = run_experiment("ball", {"h": 0.75, "T": 0.3}, tmp_path)
    names = {p.name for p in res.files}
    assert {"trace.csv", "trace.gp", "u_initial.vtk", "u_final.vtk", "manifest.json"} <= names
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["experiment"] == "ball" and isinstance(manifest["seed"], int)
    assert set(manifest["checksums"]) == {"trace.csv", "trace.gp", "u_initial.vtk",
                                          "u_final.vtk"}
    assert manifest["params"]["dt"] == pytest.approx(math.sqrt(2) * 0.75 / 10)


def test_runs_are_reproducible(tmp_path):
    a = run_experiment("ball", {"h": 0.75, "T": 0.3}, tmp_path / "a")
    b = run_experiment("ball", {"h": 0.75, "T": 0.3}, tmp_path / "b")
    ma = json.loads((tmp_path / "a" / "manifest.json").read_text())
    mb = json.loads((tmp_path / "b" / "manifest.json").read_text())
    assert ma["params"] == mb["params"] and ma["overrides"] == mb["overrides"]
    assert ma["checksums"] == mb["checksums"]
    assert (tmp_path / "a" / "trace.csv").read_bytes() == (tmp_path / "b" / "trace.csv").read_bytes()


def test_cli_exit_codes(tmp_path, capsys):
    assert main(["rof", "--out-dir", str(tmp_path / "r")]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["optimality_passed"] is True
    assert main(["flow", "--h", "0.7", "--out-dir", str(tmp_path / "x")]) == 2
    assert main(["flow", "--preset", "ball", "--h", "6*2^-3", "--T", "0.3",
                 "--max-inner-iters", "3", "--out-dir", str(tmp_path / "y")]) == 1
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("[run]\nfoo = 1\n")
    assert main(["flow", "--config", str(cfg), "--out-dir", str(tmp_path / "z")]) == 2
    assert main(["flow", "--config", str(tmp_path / "missing.cfg")]) == 2
    with pytest.raises(SystemExit):
        main(["flow", "--preset", "rof_demo"])


def test_cli_config_file_and_flag_precedence(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("[mesh]\nh = 6*2^-2\n[time]\nT = 0.9\n")
    assert main(["flow", "--config", str(cfg), "--T", "0.3", "--out-dir", str(tmp_path)]) == 0
    out = json.loads(capsys.readouterr().out)
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["overrides"]["h"] == 1.5 and manifest["overrides"]["T"] == 0.3
    assert out["steps"] == math.ceil(0.3 / (math.sqrt(2) * 1.5 / 10) - 1e-9)


def test_huge_time_step_is_stable(tmp_path, capsys):
    assert main(["flow", "--preset", "ball", "--h", "6*2^-3", "--dt", "1e9",
                 "--out-dir", str(tmp_path)]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["steps"] == 1 and out["energy_monotone"]
    _, data = io.read_csv(tmp_path / "trace.csv")
    assert np.all(np.isfinite(data[:, 1])) and data[1, 1] <= data[0, 1]


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "tvflow", "rof", "--out-dir", str(tmp_path)],
                          capture_output=True, text=True, timeout=300)
    assert proc.returncode == 0, proc.stderr
    assert json.loads(proc.stdout)["experiment"] == "rof_demo"

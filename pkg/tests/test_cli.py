import csv
import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from lqmfg.cli import main
from lqmfg.model import ModelError, compile_expression, load_model

MODELS = Path(__file__).resolve().parents[1] / "demos" / "models"

ZERO_COST = """
label = "zero"
[space]
dim = 2
[dynamics]
A = [[-1.0, 0.0], [0.0, -0.5]]
T = 1.0
[solver]
grid = 20
"""

COUPLED = """
label = "coupled"
[space]
dim = 1
[dynamics]
A = [[-0.2]]
T = 1.0
[costs]
Q = [[1.0]]
S = [[0.8]]
Z = [[0.5]]
[solver]
grid = 100
"""

FAILING = """
label = "stiff"
[space]
dim = 1
[dynamics]
A = [[0.0]]
T = 1.0
[costs]
Q = [[1.0]]
Q_T = [[50.0]]
[solver]
grid = 50
max_iter = 2
tol = 1e-14
"""


def write(tmp_path, text, name="m.toml"):
    p = tmp_path / name
    p.write_text(text)
    return p


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    conv = {"true": 1.0, "false": 0.0}
    return rows[0], np.array([[conv.get(v, None) if v in conv else float(v) for v in r] for r in rows[1:]])


def test_solve_writes_outputs(tmp_path):
    out = tmp_path / "out"
    assert main(["solve", "--model", str(MODELS / "scalar_tanh.toml"), "--out", str(out), "--grid", "200"]) == 0
    header, data = read_csv(out / "coefficients.csv")
    assert header[:2] == ["t", "P_0_0"]
    assert np.allclose(data[:, 1], np.tanh(1.0 - data[:, 0]), atol=1e-5)
    rep = json.loads((out / "report.json").read_text())
    assert rep["config"]["solver"]["grid"] == 200
    assert (out / "values.csv").exists()


def test_zero_cost_model_gives_zero_coefficients(tmp_path):
    out = tmp_path / "out"
    assert main(["solve", "--model", str(write(tmp_path, ZERO_COST)), "--out", str(out)]) == 0
    _, data = read_csv(out / "coefficients.csv")
    assert np.all(data[:, 1:] == 0.0)


def test_nash_params_change_P_only_with_coupling(tmp_path):
    m = write(tmp_path, COUPLED)
    main(["solve", "--model", str(m), "--out", str(tmp_path / "a")])
    main(["solve", "--model", str(m), "--out", str(tmp_path / "b"), "--params", "nash:2"])
    ha, a = read_csv(tmp_path / "a" / "coefficients.csv")
    _, b = read_csv(tmp_path / "b" / "coefficients.csv")
    iP = ha.index("P_0_0")
    assert np.abs(a[:, iP] - b[:, iP]).max() > 1e-3


def test_invalid_inputs_exit_1(tmp_path, capsys):
    bad = write(tmp_path, ZERO_COST + "\n[extra]\nfoo = 1\n", "bad.toml")
    assert main(["solve", "--model", str(bad), "--out", str(tmp_path / "o")]) == 1
    assert main(["solve", "--model", str(tmp_path / "missing.toml"), "--out", str(tmp_path / "o")]) == 1
    assert main(["solve", "--model", str(MODELS / "scalar_tanh.toml"), "--out", str(tmp_path / "o"), "--params", "nash:1"]) == 1
    assert main(["solve", "--model", str(MODELS / "scalar_tanh.toml"), "--out", str(tmp_path / "o"), "--params", "bogus"]) == 1
    assert "error" in capsys.readouterr().err


def test_unknown_key_in_section_is_rejected(tmp_path):
    m = write(tmp_path, ZERO_COST.replace("T = 1.0", "T = 1.0\nspeed = 3"))
    with pytest.raises(ModelError):
        load_model(m)


def test_solver_failure_exit_2(tmp_path, capsys):
    assert main(["solve", "--model", str(write(tmp_path, FAILING)), "--out", str(tmp_path / "o")]) == 2
    assert "solver failure" in capsys.readouterr().err


def test_vintage_refuses_nash(tmp_path, capsys):
    code = main(["vintage", "--model", str(MODELS / "vintage.toml"), "--out", str(tmp_path / "o"), "--params", "nash:4"])
    assert code == 1
    assert "Master" in capsys.readouterr().err


def test_vintage_command(tmp_path):
    out = tmp_path / "v"
    assert main(["vintage", "--model", str(MODELS / "vintage.toml"), "--out", str(out)]) == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["psi_T_gap"] <= 1e-12
    _, orc = read_csv(out / "oracle.csv")
    assert np.all(np.diff(orc[:, 1]) < 0)
    assert (out / "psi_profiles.csv").exists() and (out / "mean_profiles.csv").exists()


def test_nash_sweep_command(tmp_path):
    out = tmp_path / "s"
    code = main(["nash-sweep", "--model", str(MODELS / "coupled3.toml"), "--out", str(out), "--Ns", "4,8,16", "--grid", "100"])
    assert code == 0
    header, data = read_csv(out / "sweep.csv")
    d = data[:, header.index("d_xi")]
    assert np.all(np.diff(d) < 0)
    assert (out / "reports" / "master.json").exists()
    assert (out / "reports" / "nash_16.json").exists()


def test_simulate_command(tmp_path):
    out = tmp_path / "mc"
    assert main(["simulate", "--model", str(MODELS / "scalar_noisy.toml"), "--out", str(out), "--grid", "200"]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["consistent"] is True
    assert abs(summary["gap_over_se"]) <= 3


def test_reruns_are_byte_identical(tmp_path):
    for name in ["a", "b"]:
        main(["simulate", "--model", str(MODELS / "scalar_noisy.toml"), "--out", str(tmp_path / name), "--grid", "100", "--seed", "5"])
    for f in ["trajectories.csv", "costs.csv", "summary.json"]:
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_module_entry_point(tmp_path):
    r = subprocess.run(
        [sys.executable, "-m", "lqmfg", "solve", "--model", str(MODELS / "scalar_tanh.toml"), "--out", str(tmp_path / "o"), "--grid", "50"],
        capture_output=True,
        text=True,
    )
    assert r.returncode == 0, r.stderr


def test_expression_evaluator():
    f = compile_expression("2*exp(-s) + tau**2 - sqrt(4)")
    assert f(np.array([1.0]), np.array([0.0]))[0] == pytest.approx(2.0 - 1.0)
    assert compile_expression("pi")(0.0, 0.0) == pytest.approx(np.pi)
    for bad in ["__import__('os')", "s.real", "open('x')", "x + 1", "[1, 2]", "exp(1, 2)", "lambda: 1"]:
        with pytest.raises(ModelError):
            compile_expression(bad)

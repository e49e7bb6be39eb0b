import json
import os

import pytest

from main import main, build_parser
from ising import IsingProblem, store_problem
from resources import exit_ok, exit_config_error, exit_resource_cap


def write_config(tmp_path, **overrides):
    raw = {
        "name": "tiny",
        "scenario": "single_run",
        "family": "oim",
        "problem": {"n": 4, "instances": 1},
        "integrator": {"max_time": 1.0, "record_every": 5},
        "controller": {"tau": 0.2},
        "master_seed": 3,
        "plots": ["energy_trace", "mu_trace"],
    }
    raw.update(overrides)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(raw))
    return path


def test_parser_requires_command():
    with pytest.raises(SystemExit):
        build_parser().parse_args([])


def test_oracle_command(tmp_path, capsys):
    path = tmp_path / "pair.json"
    store_problem(IsingProblem([[0, 1], [1, 0]], [0, 0]), path)
    assert main(["oracle", str(path)]) == exit_ok
    out = capsys.readouterr().out
    assert "H0: -2" in out
    assert "ground states (2)" in out
    assert "+1 -1" in out and "-1 +1" in out


def test_oracle_bad_file_exit_code(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"n": 2, "J": [[0, 1], [0.5, 0]], "h": [0, 0]}))
    assert main(["oracle", str(path)]) == exit_config_error
    assert "symmetric" in capsys.readouterr().err


def test_oracle_cap_exit_code(tmp_path):
    path = tmp_path / "big.json"
    store_problem(IsingProblem([[0.0] * 25 for _ in range(25)], [0.0] * 25), path)
    assert main(["oracle", str(path)]) == exit_resource_cap


def test_run_writes_outputs(tmp_path):
    config = write_config(tmp_path)
    out = tmp_path / "results"
    assert main(["run", str(config), "--out", str(out), "--seed", "11"]) == exit_ok
    for name in ("runs.csv", "summary.csv", "bundle.json", "energy_trace.svg", "mu_trace.svg"):
        assert (out / name).exists(), name
    bundle = json.loads((out / "bundle.json").read_text())
    assert bundle["provenance"]["master_seed"] == 11


def test_run_skips_chart_without_series(tmp_path, capsys):
    config = write_config(tmp_path, scenario="compare", plots=["mu_trace"])
    out = tmp_path / "results"
    assert main(["run", str(config), "--out", str(out)]) == exit_ok
    assert not (out / "mu_trace.svg").exists()
    assert "skipping mu_trace" in capsys.readouterr().out


def test_run_invalid_config_exit_code(tmp_path, capsys):
    config = write_config(tmp_path, scenario="everything", restarts=0)
    assert main(["run", str(config), "--out", str(tmp_path / "x")]) == exit_config_error
    err = capsys.readouterr().err
    assert "scenario" in err and "restarts" in err


def test_run_cap_exit_code(tmp_path):
    config = write_config(tmp_path, problem={"n": 25, "instances": 1}, metrics={"oracle": True})
    assert main(["run", str(config), "--out", str(tmp_path / "x")]) == exit_resource_cap


def test_plot_from_bundle(tmp_path):
    config = write_config(tmp_path)
    out = tmp_path / "results"
    main(["run", str(config), "--out", str(out)])
    target = tmp_path / "again.svg"
    assert main(["plot", str(out / "bundle.json"), "--kind", "mu_trace", "--out", str(target)]) == exit_ok
    assert target.exists()
    assert main(["plot", str(out / "bundle.json"), "--kind", "energy_trace"]) == exit_ok
    assert os.path.exists(out / "energy_trace.svg")

import glob
import json
import os

import numpy as np
import pandas as pd
import pytest

from batch import (
    run_columns,
    summary_columns,
    theory_run_columns,
    build_experiment_config,
    load_experiment_config,
    build_instances,
    oracle_enabled,
    cell_seeds,
    run_experiment,
    emit_csv,
    emit_json,
    load_bundle,
    write_outputs,
)
from ising import generate_spinmodel, store_problem, brute_force_ground
from stats import RunMetrics, aggregate
from resources import ConfigValidationError, ResourceCapError

configs_dir = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "configs")


def small(scenario="compare", **overrides):
    raw = {
        "scenario": scenario,
        "family": "oim",
        "problem": {"n": 4, "instances": 2},
        "integrator": {"max_time": 2.0},
        "controller": {"tau": 0.2},
        "restarts": 2,
        "master_seed": 7,
    }
    raw.update(overrides)
    return build_experiment_config(raw)


@pytest.mark.parametrize("path", sorted(glob.glob(os.path.join(configs_dir, "*.json"))))
def test_shipped_configs_validate(path):
    cfg = load_experiment_config(path)
    assert cfg.scenario
    assert len(cfg.config_hash) == 64


def test_load_config_reports_json_position(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"scenario": "compare",\n "family": }')
    with pytest.raises(ConfigValidationError, match="line 2"):
        load_experiment_config(path)


def test_config_hash_tracks_parameters():
    a = small()
    assert a.config_hash == small().config_hash
    assert a.config_hash != small(master_seed=8).config_hash


def test_cli_overrides_apply_before_validation(tmp_path):
    cfg = build_experiment_config({"scenario": "compare", "controller": {}}, output_dir=str(tmp_path), master_seed=99)
    assert cfg.output_dir == str(tmp_path)
    assert cfg.master_seed == 99
    assert cfg.source["master_seed"] == 99


def test_bad_component_values_surface_as_config_errors():
    with pytest.raises(ConfigValidationError, match="dt"):
        small(integrator={"dt": -1.0, "max_time": 1.0})
    with pytest.raises(ConfigValidationError, match="beta"):
        small(controller={"beta": 2.0})


def test_instances_are_seeded_from_master():
    cfg = small()
    a = build_instances(cfg)
    b = build_instances(small())
    assert [i.seed for i in a] == [i.seed for i in b]
    assert a[0].problem == b[0].problem
    assert a[0].seed != a[1].seed
    assert a[0].H0 == brute_force_ground(a[0].problem)[0]


def test_oracle_auto_threshold():
    cfg = small()
    assert oracle_enabled(cfg, 20)
    assert not oracle_enabled(cfg, 21)
    assert not oracle_enabled(small(metrics={"oracle": False}), 4)


def test_oracle_forced_beyond_cap_refused():
    cfg = small(problem={"n": 25, "instances": 1}, metrics={"oracle": True})
    with pytest.raises(ResourceCapError):
        build_instances(cfg)


def test_augmented_instances_carry_reference_node():
    cfg = small(problem={"n": 3, "instances": 1, "bias_mode": "augment"})
    inst = build_instances(cfg)[0]
    assert inst.run_problem.n == 4
    assert inst.reference_index == 0
    assert inst.problem.n == 3


def test_cell_seeds_independent_of_machine_and_sweep():
    cfg = small()
    assert cell_seeds(cfg, 0, 1) == cell_seeds(cfg, 0, 1)
    assert cell_seeds(cfg, 0, 1) != cell_seeds(cfg, 0, 0)
    assert all(0 <= s < 2 ** 63 for s in cell_seeds(cfg, 3, 4))


def test_compare_runs_are_paired():
    bundle = run_experiment(small(), threads=1, verbose=False)
    runs = bundle.runs
    assert list(runs.columns) == run_columns
    assert len(runs) == 2 * 2 * 2
    aim = runs[runs["machine"] == "aim"].set_index(["instance", "restart"])
    caim = runs[runs["machine"] == "caim"].set_index(["instance", "restart"])
    pd.testing.assert_series_equal(aim["init_seed"], caim["init_seed"])
    pd.testing.assert_series_equal(aim["noise_seed"], caim["noise_seed"])
    assert np.all(runs["bestH"] >= runs["H0"] - 1e-9)
    assert set(bundle.summary["machine"]) == {"aim", "caim"}
    assert list(bundle.summary.columns) == summary_columns
    assert "all" in bundle.tests


def test_results_identical_across_thread_counts():
    a = run_experiment(small(), threads=1, verbose=False)
    b = run_experiment(small(), threads=3, verbose=False)
    pd.testing.assert_frame_equal(a.runs, b.runs)
    pd.testing.assert_frame_equal(a.summary, b.summary)


def test_threads_from_environment(monkeypatch):
    monkeypatch.setenv("CAIM_THREADS", "2")
    bundle = run_experiment(small(restarts=1), verbose=False)
    assert len(bundle.runs) == 4


def test_provenance_fields():
    bundle = run_experiment(small(restarts=1), threads=1, verbose=False)
    prov = bundle.provenance
    for key in ("config_hash", "master_seed", "instance_seeds", "version", "numpy_version", "config"):
        assert key in prov
    assert len(prov["instance_seeds"]) == 2


def test_mu_sweep_skips_controller_at_zero():
    bundle = run_experiment(small("mu_sweep", sweep=[0.0, 1.0], restarts=1), threads=1, verbose=False)
    runs = bundle.runs
    assert set(runs[runs["machine"] == "aim"]["sweep_value"]) == {0.0, 1.0}
    assert set(runs[runs["machine"] == "caim"]["sweep_value"]) == {1.0}
    assert len(bundle.summary) == 3


def test_tau_sweep_repeats_baseline():
    bundle = run_experiment(small("tau_sweep", sweep=[0.1, 0.2], restarts=1), threads=1, verbose=False)
    runs = bundle.runs
    assert len(runs[runs["machine"] == "aim"]) == 2
    summary = bundle.summary
    aim = summary[summary["machine"] == "aim"]
    assert sorted(aim["sweep_value"]) == [0.1, 0.2]
    assert aim["mean_r"].nunique() == 1
    assert sorted(summary[summary["machine"] == "caim"]["sweep_value"]) == [0.1, 0.2]


def test_noise_sweep_grid():
    bundle = run_experiment(small("noise_sweep", sweep=[0.0, 0.3], restarts=1), threads=1, verbose=False)
    assert len(bundle.runs) == 2 * 2 * 2
    assert set(bundle.tests) == {"0", "0.3"}


def test_restart_sweep_best_of_is_monotone():
    bundle = run_experiment(small("restart_sweep", sweep=[1, 3], restarts=1), threads=1, verbose=False)
    assert bundle.runs["restart"].max() == 2
    summary = bundle.summary
    for machine in ("aim", "caim"):
        rows = summary[summary["machine"] == machine].set_index("restarts")
        assert rows.loc[3, "exact_success"] >= rows.loc[1, "exact_success"]
        assert rows.loc[3, "mean_r"] >= rows.loc[1, "mean_r"]
        assert rows.loc[3, "tRun_mean"] >= rows.loc[1, "tRun_mean"]


def single_run(**overrides):
    return small("single_run", problem={"n": 4, "instances": 1}, **overrides)


def test_single_run_keeps_traces():
    bundle = run_experiment(single_run(), threads=1, verbose=False)
    assert len(bundle.runs) == 2
    assert {"trajectory_aim", "trajectory_caim", "mu_trace"} <= set(bundle.traces)
    assert set(bundle.trajectories) == {"trajectory_aim", "trajectory_caim"}
    pd.testing.assert_frame_equal(bundle.trajectories["trajectory_aim"].samples, bundle.traces["trajectory_aim"])
    assert list(bundle.traces["trajectory_aim"].columns) == ["t", "E", "K", "R", "H_decision"]


def test_augmented_runs_report_original_energies():
    cfg = small(problem={"n": 4, "instances": 2, "bias_mode": "augment"}, restarts=1)
    bundle = run_experiment(cfg, threads=1, verbose=False)
    runs = bundle.runs
    assert np.all(runs["n"] == 4)
    assert np.all(runs["bestH"] >= runs["H0"] - 1e-9)


def test_file_source_runs_single_instance(tmp_path):
    path = tmp_path / "problem.json"
    store_problem(generate_spinmodel(5, seed=3), path)
    cfg = small(problem={"source": "file", "path": str(path)}, restarts=1)
    bundle = run_experiment(cfg, threads=1, verbose=False)
    assert set(bundle.runs["instance"]) == {0}
    assert set(bundle.runs["instance_seed"]) == {-1}


def test_theory_check_scenario():
    cfg = small("theory_check", problem={"n": 2, "instances": 2}, sweep=[1.0, 10.0], grid_res=12, controller=None)
    bundle = run_experiment(cfg, threads=1, verbose=False)
    assert list(bundle.runs.columns) == theory_run_columns
    assert len(bundle.runs) == 4
    summary = bundle.summary
    assert list(summary["sweep_value"]) == [1.0, 10.0]
    assert summary.loc[summary["sweep_value"] == 10.0, "equivalent_fraction"].iloc[0] == 1.0


def test_outputs_round_trip(tmp_path):
    bundle = run_experiment(single_run(), threads=1, verbose=False)
    paths = write_outputs(bundle, str(tmp_path))
    for name in ("runs", "summary", "bundle", "trajectory_aim", "mu_trace"):
        assert os.path.exists(paths[name])
    back = load_bundle(paths["bundle"])
    assert list(back.runs.columns) == run_columns
    assert back.runs["bestH"].to_numpy() == pytest.approx(bundle.runs["bestH"].to_numpy())
    assert back.provenance["config_hash"] == bundle.provenance["config_hash"]
    assert set(back.traces) == set(bundle.traces)
    csv = pd.read_csv(paths["runs"])
    assert list(csv.columns) == run_columns


def test_outputs_include_state_and_waveform_sidecars(tmp_path):
    cfg = small(
        "single_run",
        problem={"n": 3, "instances": 1, "bias_mode": "augment"},
        integrator={"max_time": 1.0, "record_states": True},
        controller={"tau": 0.4, "sensor_feedback": True, "sensor": {"dump": True}},
    )
    bundle = run_experiment(cfg, threads=1, verbose=False)
    paths = write_outputs(bundle, str(tmp_path))
    for name in ("states_aim", "states_caim", "waveforms_caim"):
        assert os.path.exists(paths[name])
    assert "waveforms_aim" not in paths
    lines = open(paths["states_caim"]).read().splitlines()
    assert len(lines) == len(bundle.traces["trajectory_caim"])
    assert len(json.loads(lines[0])["psi"]) == 4
    waveforms = pd.read_csv(paths["waveforms_caim"])
    assert list(waveforms.columns) == ["t", "v_0", "v_1", "v_2", "v_3"]


def test_outputs_without_snapshots_skip_sidecars(tmp_path):
    paths = write_outputs(run_experiment(single_run(), threads=1, verbose=False), str(tmp_path))
    assert not any(name.startswith(("states_", "waveforms_")) for name in paths)


def test_load_bundle_rejects_mismatched_columns(tmp_path, capsys):
    bundle = run_experiment(small(restarts=1), threads=1, verbose=False)
    path = tmp_path / "bundle.json"
    emit_json(bundle, path)
    payload = json.loads(path.read_text())
    payload["runs"]["columns"][payload["runs"]["columns"].index("bestH")] = "best"
    path.write_text(json.dumps(payload))
    with pytest.raises(ConfigValidationError, match="runs"):
        load_bundle(path)
    assert "missing columns" in capsys.readouterr().out


def test_summary_rows_come_from_aggregate():
    bundle = run_experiment(small(), threads=1, verbose=False)
    runs = bundle.runs
    for _, row in bundle.summary.iterrows():
        group = runs[runs["machine"] == row["machine"]]
        results = [RunMetrics(**r) for r in group[["bestH", "r", "pHat", "tRun", "tts", "converged"]].to_dict("records")]
        expected = aggregate(results, ground_truth=group["H0"].to_numpy(dtype=float))
        assert row["runs"] == expected["runs"] == len(group)
        assert row["mean_r"] == pytest.approx(expected["mean_r"])
        assert row["exact_success"] == pytest.approx(expected["exact_success"])
        assert row["exact_success"] == pytest.approx(group["hit"].astype(float).mean())
        assert row["tts_median"] == pytest.approx(expected["tts_median"])


def test_outputs_are_byte_stable(tmp_path):
    first = run_experiment(small(restarts=1), threads=1, verbose=False)
    second = run_experiment(small(restarts=1), threads=2, verbose=False)
    emit_csv(first, tmp_path / "a.csv")
    emit_csv(second, tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    emit_json(first, tmp_path / "a.json")
    emit_json(second, tmp_path / "b.json")
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
    json.loads((tmp_path / "a.json").read_text())


def shipped(name, **overrides):
    with open(os.path.join(configs_dir, f"{name}.json")) as f:
        raw = json.load(f)
    raw.update(overrides)
    return build_experiment_config(raw)


def success_by(summary, machine, key="sweep_value"):
    rows = summary[summary["machine"] == machine]
    return dict(zip(rows[key], rows["exact_success"]))


@pytest.mark.slow
def test_controller_hits_ground_state_more_often_than_autonomous():
    cfg = shipped("compare", problem={"source": "generate", "n": 10, "instances": 5}, restarts=10)
    bundle = run_experiment(cfg, threads=2, verbose=False)
    runs = bundle.runs
    assert np.all(runs["bestH"] >= runs["H0"] - 1e-9)
    hits = runs.groupby("machine")["hit"].sum()
    assert hits["caim"] > hits["aim"]
    assert hits["caim"] >= 1.2 * hits["aim"]


@pytest.mark.slow
def test_mu_sweep_success_peaks_inside_the_range():
    cfg = shipped("mu_sweep", controller=None)
    bundle = run_experiment(cfg, threads=2, verbose=False)
    success = success_by(bundle.summary, "aim")
    mus = sorted(success)
    assert mus[0] == 0.1 and mus[-1] == 3.0
    peak = max(success[mu] for mu in mus[1:-1])
    assert peak > success[mus[0]]
    assert peak > success[mus[-1]]


@pytest.mark.slow
def test_long_slice_delay_does_not_help():
    cfg = shipped("compare", scenario="tau_sweep", sweep=[0.5, 5.0],
                  problem={"source": "generate", "n": 10, "instances": 5}, restarts=10)
    bundle = run_experiment(cfg, threads=2, verbose=False)
    success = success_by(bundle.summary, "caim")
    assert success[5.0] <= success[0.5]

# experiment orchestration: scenario grids over instances x restarts x sweep points,
# paired AIM/CAIM seeding, aggregation and CSV/JSON emission
import hashlib
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace, asdict

import numpy as np
import pandas as pd

from resources import (
    __version__,
    derive_seed,
    threads_from_env,
    ConfigValidationError,
)
from check import clean_experiment_config, check_columns
from ising import generate_spinmodel, load_problem, augment_bias, brute_force_ground
from models import AimModel
from dynamics import IntegratorConfig, sample_initial, run_autonomous, write_trajectory_csv, write_states_jsonl
from controller import ControllerConfig, run_controlled
from sensor import WaveformConfig
from stats import RunMetrics, run_metrics, aggregate, equivalence_check_grid, is_hit, paired_success_test

run_columns = [
    "machine", "sweep_value", "instance", "restart", "instance_seed", "init_seed", "noise_seed",
    "n", "bestH", "H0", "hit", "r", "pHat", "tRun", "tts", "converged",
]
summary_columns = [
    "machine", "sweep_value", "instances", "restarts", "runs", "mean_r", "max_r", "exact_success",
    "pHat_mean", "tRun_mean", "tts_median", "converged_fraction",
]
metric_columns = ["bestH", "r", "pHat", "tRun", "tts", "converged"]
theory_run_columns = [
    "machine", "sweep_value", "instance", "instance_seed", "n", "H0", "H1", "gap",
    "minEnergyGround", "minEnergyExcited", "equivalent",
]
theory_summary_columns = ["machine", "sweep_value", "instances", "equivalent_fraction", "monotone"]

# seed stream tags
stream_instance, stream_init, stream_noise = 0, 1, 2


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    scenario: str
    family: str
    model: AimModel
    problem: dict
    integrator: IntegratorConfig
    controller: ControllerConfig
    mu: float
    sweep: list
    restarts: int
    master_seed: int
    metrics: dict
    grid_res: int
    plots: list
    output_dir: str
    source: dict = field(default_factory=dict, repr=False)

    @property
    def config_hash(self):
        canonical = json.dumps(self.source, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


@dataclass
class ResultBundle:
    runs: pd.DataFrame
    summary: pd.DataFrame
    provenance: dict
    tests: dict = field(default_factory=dict)
    traces: dict = field(default_factory=dict)
    # Trajectory objects behind the trajectory_<machine> traces; not stored in bundle.json
    trajectories: dict = field(default_factory=dict, repr=False)


def build_experiment_config(raw, output_dir=None, master_seed=None):
    """
    Validate a raw config dict and build an ExperimentConfig.

    CLI overrides (output_dir, master_seed) are applied before validation so
    the config hash reflects the parameters actually used.
    """
    raw = dict(raw)
    if output_dir is not None:
        raw["output_dir"] = output_dir
    if master_seed is not None:
        raw["master_seed"] = master_seed
    cfg = clean_experiment_config(raw)

    try:
        model = AimModel(cfg["family"], **cfg["model"])
        integrator = IntegratorConfig(**cfg["integrator"])
        controller = None
        if cfg["controller"] is not None:
            ctrl = dict(cfg["controller"])
            sensor = ctrl.pop("sensor")
            controller = ControllerConfig(**ctrl, sensor=WaveformConfig(**sensor) if sensor else None)
    except ConfigValidationError:
        raise
    except TypeError as e:
        raise ConfigValidationError([str(e)], context="experiment config") from e

    return ExperimentConfig(
        name=cfg["name"],
        scenario=cfg["scenario"],
        family=cfg["family"],
        model=model,
        problem=cfg["problem"],
        integrator=integrator,
        controller=controller,
        mu=float(cfg["mu"]),
        sweep=list(cfg["sweep"]),
        restarts=cfg["restarts"],
        master_seed=cfg["master_seed"],
        metrics=cfg["metrics"],
        grid_res=cfg["grid_res"],
        plots=cfg["plots"],
        output_dir=cfg["output_dir"],
        source={k: v for k, v in cfg.items() if k != "output_dir"},
    )


def load_experiment_config(path, output_dir=None, master_seed=None):
    try:
        with open(path) as f:
            raw = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigValidationError([f"{path}: line {e.lineno} column {e.colno}: {e.msg}"], context="experiment config") from e
    return build_experiment_config(raw, output_dir=output_dir, master_seed=master_seed)


# #####################################################################################
# instances and oracle
# #####################################################################################

@dataclass(frozen=True)
class Instance:
    index: int
    seed: int
    problem: object
    run_problem: object
    reference_index: int
    H0: float
    H1: float


def oracle_enabled(cfg, n):
    oracle = cfg.metrics["oracle"]
    if oracle == "auto":
        return n <= 20
    return bool(oracle)


def build_instances(cfg):
    problem_cfg = cfg.problem
    if problem_cfg["source"] == "file":
        problems = [(0, -1, load_problem(problem_cfg["path"]))]
    else:
        problems = []
        for i in range(problem_cfg["instances"]):
            seed = derive_seed(cfg.master_seed, stream_instance, i)
            problems.append((i, seed, generate_spinmodel(problem_cfg["n"], seed, problem_cfg["include_zero"])))

    instances = []
    for index, seed, p in problems:
        H0 = H1 = None
        if oracle_enabled(cfg, p.n):
            H0, _, levels = brute_force_ground(p)
            H1 = float(levels.levels[1]) if len(levels.levels) > 1 else None
        if problem_cfg["bias_mode"] == "augment":
            run_problem, reference_index = augment_bias(p), 0
        else:
            run_problem, reference_index = p, None
        instances.append(Instance(index, seed, p, run_problem, reference_index, H0, H1))
    return instances


# #####################################################################################
# single cells
# #####################################################################################

@dataclass(frozen=True)
class Cell:
    machine: str
    sweep_value: float
    instance: Instance
    restart: int
    mu: float
    integrator: IntegratorConfig
    controller: ControllerConfig
    keep_trace: bool = False


def cell_seeds(cfg, instance_index, restart):
    # seeds depend on (instance, restart) only, so machines and sweep points share them
    return (
        derive_seed(cfg.master_seed, stream_init, instance_index, restart),
        derive_seed(cfg.master_seed, stream_noise, instance_index, restart),
    )


def initial_state(cfg, instance, init_seed):
    p = instance.run_problem
    psi0 = sample_initial(cfg.model, p.n, init_seed)
    if instance.reference_index is not None and cfg.model.family == "oim":
        # reference oscillator starts at phase 0 (spin up)
        psi0[instance.reference_index] = 0.0
    return psi0


def run_cell(cfg, cell):
    init_seed, noise_seed = cell_seeds(cfg, cell.instance.index, cell.restart)
    icfg = replace(cell.integrator, seed=noise_seed)
    p = cell.instance.run_problem
    psi0 = initial_state(cfg, cell.instance, init_seed)

    mu_trace = None
    if cell.machine == "caim":
        traj, mu_trace, _ = run_controlled(cfg.model, p, psi0, cell.controller, icfg,
                                           reference_index=cell.instance.reference_index)
    else:
        traj, _ = run_autonomous(cfg.model, p, psi0, cell.mu, icfg)

    # augmented runs decide on (s0, s); the flip symmetry maps them back onto the original problem
    best_H = traj.best_H
    metrics = run_metrics(cell.instance.problem, best_H, traj.t_run, traj.converged_at is not None,
                          norm=cfg.metrics["norm"], constant=cfg.metrics["success_constant"])
    H0 = cell.instance.H0
    row = {
        "machine": cell.machine,
        "sweep_value": cell.sweep_value,
        "instance": cell.instance.index,
        "restart": cell.restart,
        "instance_seed": cell.instance.seed,
        "init_seed": init_seed,
        "noise_seed": noise_seed,
        "n": cell.instance.problem.n,
        "bestH": metrics.bestH,
        "H0": H0,
        "hit": is_hit(best_H, H0) if H0 is not None else None,
        "r": metrics.r,
        "pHat": metrics.pHat,
        "tRun": metrics.tRun,
        "tts": metrics.tts,
        "converged": metrics.converged,
    }
    trace = None
    if cell.keep_trace:
        trace = {"trajectory": traj.samples, "mu_trace": mu_trace, "run": traj}
    return row, trace


def run_cells(cells, cfg, threads):
    # map keeps submission order, so results do not depend on completion order
    if threads <= 1:
        return [run_cell(cfg, cell) for cell in cells]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda cell: run_cell(cfg, cell), cells))


# #####################################################################################
# scenario grids
# #####################################################################################

def controller_for_mu(ctrl, mu_prime):
    # bounds derived from μ' follow the swept value
    return replace(ctrl, mu_prime=mu_prime, clip_bound=4.0 * mu_prime, reference_mu=4.0 * mu_prime)


def scenario_cells(cfg, instances):
    machines = ["aim"] + (["caim"] if cfg.controller is not None else [])
    restarts = range(cfg.restarts)
    cells = []

    def add(machine, sweep_value, mu, icfg, ctrl, keep_trace=False, restart_range=restarts):
        for instance in instances:
            for r in restart_range:
                cells.append(Cell(machine, sweep_value, instance, r, mu, icfg, ctrl, keep_trace))

    if cfg.scenario == "compare":
        for machine in machines:
            add(machine, None, cfg.mu, cfg.integrator, cfg.controller)
    elif cfg.scenario == "single_run":
        for machine in machines:
            add(machine, None, cfg.mu, cfg.integrator, cfg.controller,
                keep_trace=True, restart_range=range(1))
    elif cfg.scenario == "mu_sweep":
        for value in cfg.sweep:
            add("aim", value, value, cfg.integrator, None)
            if cfg.controller is not None and value > 0:
                add("caim", value, cfg.mu, cfg.integrator, controller_for_mu(cfg.controller, value))
    elif cfg.scenario == "tau_sweep":
        add("aim", None, cfg.mu, cfg.integrator, None)
        for value in cfg.sweep:
            add("caim", value, cfg.mu, cfg.integrator, replace(cfg.controller, tau=value))
    elif cfg.scenario == "noise_sweep":
        for value in cfg.sweep:
            icfg = replace(cfg.integrator, noise_gamma=value)
            for machine in machines:
                add(machine, value, cfg.mu, icfg, cfg.controller)
    elif cfg.scenario == "restart_sweep":
        # run the largest restart count once; smaller counts are prefixes of it
        most = int(max(cfg.sweep))
        for machine in machines:
            add(machine, None, cfg.mu, cfg.integrator, cfg.controller, restart_range=range(most))
    return cells


def summarize(runs, group_columns=("machine", "sweep_value")):
    rows = []
    if runs.empty:
        return pd.DataFrame(columns=summary_columns)
    for keys, group in runs.groupby(list(group_columns), dropna=False, sort=False):
        machine, sweep_value = keys
        results = [RunMetrics(**record) for record in group[metric_columns].to_dict("records")]
        # exact success needs H₀ for every run of the group
        H0 = group["H0"]
        ground_truth = H0.to_numpy(dtype=float) if H0.notna().all() else None
        pooled = aggregate(results, ground_truth=ground_truth)
        rows.append({
            "machine": machine,
            "sweep_value": sweep_value,
            "instances": int(group["instance"].nunique()),
            "restarts": int(group.groupby("instance")["restart"].nunique().max()),
            **{k: v for k, v in pooled.items() if k in summary_columns},
        })
    return pd.DataFrame(rows, columns=summary_columns)


def best_of_restarts(cfg, runs, instances, restart_count):
    """Best-of-R per (machine, instance): min bestH over the first R restarts, runtimes summed."""
    by_index = {inst.index: inst for inst in instances}
    rows = []
    subset = runs[runs["restart"] < restart_count]
    for (machine, instance), group in subset.groupby(["machine", "instance"], sort=False):
        inst = by_index[instance]
        best_H = float(group["bestH"].min())
        t_run = float(group["tRun"].sum())
        metrics = run_metrics(inst.problem, best_H, t_run, bool(group["converged"].all()),
                              norm=cfg.metrics["norm"], constant=cfg.metrics["success_constant"])
        rows.append({
            "machine": machine,
            "sweep_value": restart_count,
            "instance": instance,
            "restart": restart_count - 1,
            "H0": inst.H0,
            "hit": is_hit(best_H, inst.H0) if inst.H0 is not None else None,
            **asdict(metrics),
        })
    frame = pd.DataFrame(rows)
    summary = summarize(frame)
    summary["restarts"] = restart_count
    return summary


def run_theory_check(cfg, instances):
    rows = []
    for instance in instances:
        p = instance.run_problem
        _, ground_set, levels = brute_force_ground(p)
        H0 = float(levels.levels[0])
        gap = levels.gap
        for mu in cfg.sweep:
            report = equivalence_check_grid(cfg.model, p, mu, cfg.grid_res, ground_set=ground_set)
            rows.append({
                "machine": "grid",
                "sweep_value": float(mu),
                "instance": instance.index,
                "instance_seed": instance.seed,
                "n": p.n,
                "H0": H0,
                "H1": H0 + gap if np.isfinite(gap) else None,
                "gap": gap if np.isfinite(gap) else None,
                "minEnergyGround": report.minEnergyGround,
                "minEnergyExcited": report.minEnergyExcited,
                "equivalent": report.equivalent,
            })
        print(f"theory check instance {instance.index}: gap={gap:.4g}, "
              f"equivalent at {[r['sweep_value'] for r in rows if r['instance'] == instance.index and r['equivalent']]}")
    runs = pd.DataFrame(rows, columns=theory_run_columns)

    # an instance is monotone when it never flips from equivalent back to not equivalent as μ grows
    monotone = {}
    for index, group in runs.sort_values("sweep_value").groupby("instance"):
        flags = group["equivalent"].tolist()
        monotone[index] = all(not (a and not b) for a, b in zip(flags, flags[1:]))
    summary_rows = []
    for mu, group in runs.groupby("sweep_value", sort=True):
        summary_rows.append({
            "machine": "grid",
            "sweep_value": mu,
            "instances": int(group["instance"].nunique()),
            "equivalent_fraction": float(group["equivalent"].mean()),
            "monotone": all(monotone[i] for i in group["instance"]),
        })
    return runs, pd.DataFrame(summary_rows, columns=theory_summary_columns)


def run_experiment(cfg, threads=None, verbose=True):
    """
    Execute the scenario grid of an experiment config.

    Args:
        cfg (ExperimentConfig): validated experiment.
        threads (int, optional): worker count; defaults to CAIM_THREADS.
        verbose (bool): print progress banners.

    Returns:
        ResultBundle
    """
    threads = threads_from_env() if threads is None else threads
    if verbose:
        print(f"\n--------------------------------\nRunning experiment {cfg.name}\n--------------------------------\n")
        print(f"Scenario: {cfg.scenario}")
        print(f"Family: {cfg.family}")
        print(f"Master seed: {cfg.master_seed}")
        print(f"Restarts: {cfg.restarts}")
        print(f"Sweep: {cfg.sweep}")
        print(f"Threads: {threads}")

    instances = build_instances(cfg)
    if verbose:
        print(f"Built {len(instances)} instance(s) of n={instances[0].problem.n}; "
              f"oracle {'on' if instances[0].H0 is not None else 'off'}")

    provenance = {
        "name": cfg.name,
        "scenario": cfg.scenario,
        "config_hash": cfg.config_hash,
        "master_seed": cfg.master_seed,
        "instance_seeds": [inst.seed for inst in instances],
        "version": __version__,
        "numpy_version": np.__version__,
        "config": cfg.source,
    }

    if cfg.scenario == "theory_check":
        runs, summary = run_theory_check(cfg, instances)
        return ResultBundle(runs=runs, summary=summary, provenance=provenance)

    cells = scenario_cells(cfg, instances)
    if verbose:
        print(f"Running {len(cells)} cell(s)...")
    results = run_cells(cells, cfg, threads)
    runs = pd.DataFrame([row for row, _ in results], columns=run_columns)

    if cfg.scenario == "restart_sweep":
        summary = pd.concat([best_of_restarts(cfg, runs, instances, int(R)) for R in cfg.sweep], ignore_index=True)
    elif cfg.scenario == "tau_sweep":
        caim = summarize(runs[runs["machine"] == "caim"])
        aim = summarize(runs[runs["machine"] == "aim"])
        # the baseline does not depend on τ: repeat its row at each sweep point
        aim_rows = pd.concat([aim.assign(sweep_value=value) for value in cfg.sweep], ignore_index=True)
        summary = pd.concat([aim_rows, caim], ignore_index=True)[summary_columns]
    else:
        summary = summarize(runs)

    tests = {}
    if cfg.controller is not None and cfg.scenario in ("compare", "noise_sweep", "mu_sweep"):
        for value, group in runs.groupby("sweep_value", dropna=False, sort=False):
            key = "all" if pd.isna(value) else f"{value:g}"
            tests[key] = {"mean_r": paired_success_test(group, "r")}
            if group["hit"].notna().all():
                tests[key]["exact_success"] = paired_success_test(group.assign(hit=group["hit"].astype(float)), "hit")

    # single_run takes one instance, so each machine contributes one trajectory
    traces, trajectories = {}, {}
    for row, trace in results:
        if trace is not None:
            name = f"trajectory_{row['machine']}"
            traces[name] = trace["trajectory"]
            trajectories[name] = trace["run"]
            if trace["mu_trace"] is not None:
                traces["mu_trace"] = trace["mu_trace"]

    if verbose:
        print("\n--------------------------------\nSummary\n--------------------------------\n")
        print(summary.to_string(index=False))
    return ResultBundle(runs=runs, summary=summary, provenance=provenance, tests=tests, traces=traces,
                        trajectories=trajectories)


# #####################################################################################
# emission
# #####################################################################################

def emit_csv(bundle, path, table="runs"):
    # stable column order, 12 significant digits
    df = bundle.runs if table == "runs" else bundle.summary
    try:
        df.to_csv(path, index=False, float_format="%.12g")
    except OSError as e:
        raise OSError(f"could not write {table} csv to {path}: {e}") from e


def _frame_to_json(df):
    return {"columns": list(df.columns), "data": df.astype(object).where(df.notna(), None).values.tolist()}


def _frame_from_json(payload):
    return pd.DataFrame(payload["data"], columns=payload["columns"])


def emit_json(bundle, path):
    payload = {
        "provenance": bundle.provenance,
        "runs": _frame_to_json(bundle.runs),
        "summary": _frame_to_json(bundle.summary),
        "tests": bundle.tests,
        "traces": {name: _frame_to_json(df) for name, df in bundle.traces.items()},
    }
    try:
        with open(path, "w") as f:
            json.dump(payload, f, indent=1, default=_json_default)
            f.write("\n")
    except OSError as e:
        raise OSError(f"could not write bundle json to {path}: {e}") from e


def _json_default(x):
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, np.bool_):
        return bool(x)
    raise TypeError(f"cannot serialize {type(x).__name__}")


def load_bundle(path):
    with open(path) as f:
        payload = json.load(f)
    bundle = ResultBundle(
        runs=_frame_from_json(payload["runs"]),
        summary=_frame_from_json(payload["summary"]),
        provenance=payload["provenance"],
        tests=payload.get("tests", {}),
        traces={name: _frame_from_json(t) for name, t in payload.get("traces", {}).items()},
    )
    theory = bundle.provenance.get("scenario") == "theory_check"
    required = {
        "runs": theory_run_columns if theory else run_columns,
        "summary": theory_summary_columns if theory else summary_columns,
    }
    missing = [table for table, columns in required.items()
               if not check_columns(getattr(bundle, table), columns, f"{path} {table}")]
    if missing:
        raise ConfigValidationError([f"{table}: columns do not match this version" for table in missing],
                                    context=f"bundle {path}")
    return bundle


def write_outputs(bundle, output_dir):
    """
    Write runs.csv, summary.csv, bundle.json and any traces into output_dir; returns the paths written.

    Kept trajectories also write states_<machine>.jsonl when state snapshots
    were recorded, and waveforms_<machine>.csv when the sensor dump was on.
    """
    os.makedirs(output_dir, exist_ok=True)
    paths = {
        "runs": os.path.join(output_dir, "runs.csv"),
        "summary": os.path.join(output_dir, "summary.csv"),
        "bundle": os.path.join(output_dir, "bundle.json"),
    }
    emit_csv(bundle, paths["runs"], "runs")
    emit_csv(bundle, paths["summary"], "summary")
    emit_json(bundle, paths["bundle"])
    for name, df in bundle.traces.items():
        paths[name] = os.path.join(output_dir, f"{name}.csv")
        if name in bundle.trajectories:
            write_trajectory_csv(bundle.trajectories[name], paths[name])
        else:
            df.to_csv(paths[name], index=False, float_format="%.12g")
    for name, traj in bundle.trajectories.items():
        machine = name.split("_", 1)[1]
        if traj.states:
            paths[f"states_{machine}"] = os.path.join(output_dir, f"states_{machine}.jsonl")
            write_states_jsonl(traj, paths[f"states_{machine}"])
        if traj.waveforms is not None:
            paths[f"waveforms_{machine}"] = os.path.join(output_dir, f"waveforms_{machine}.csv")
            traj.waveforms.to_csv(paths[f"waveforms_{machine}"], index=False, float_format="%.12g")
    return paths

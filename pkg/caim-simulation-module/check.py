import os
import numbers
import warnings
from copy import deepcopy

from resources import (
    families,
    scenarios,
    sweep_scenarios,
    default_model,
    default_integrator,
    default_controller,
    default_problem,
    default_metrics,
    brute_force_cap,
    grid_check_cap,
    ConfigValidationError,
)
# check problem files, experiment configs and result tables for consistency


def _is_number(x):
    return isinstance(x, numbers.Real) and not isinstance(x, bool)


# check a decoded problem file against the {"n", "J", "h"} schema
# returns a list of problems found; an empty list means the payload is usable
def check_problem_payload(payload):
    errors = []
    if not isinstance(payload, dict):
        return [f"top level must be an object with keys n, J, h, got {type(payload).__name__}"]
    for key in ("n", "J", "h"):
        if key not in payload:
            errors.append(f"missing field '{key}'")
    if errors:
        return errors

    n = payload["n"]
    if not isinstance(n, int) or isinstance(n, bool) or n < 1:
        errors.append(f"field 'n' must be a positive integer, got {n!r}")
        return errors

    J = payload["J"]
    if not isinstance(J, list) or len(J) != n:
        errors.append(f"field 'J' must be a list of {n} rows")
    else:
        for i, row in enumerate(J):
            if not isinstance(row, list) or len(row) != n:
                errors.append(f"field 'J' row {i} must have {n} entries")
            elif not all(_is_number(x) for x in row):
                errors.append(f"field 'J' row {i} has a non-numeric entry")

    h = payload["h"]
    if not isinstance(h, list) or len(h) != n:
        errors.append(f"field 'h' must be a list of {n} numbers")
    elif not all(_is_number(x) for x in h):
        errors.append("field 'h' has a non-numeric entry")
    return errors


def _unknown_keys(section, given, allowed, errors):
    for key in sorted(set(given) - set(allowed)):
        errors.append(f"{section}.{key}: unknown field")


def _merge(section, given, defaults, errors):
    if given is None:
        return deepcopy(defaults)
    if not isinstance(given, dict):
        errors.append(f"{section}: must be an object")
        return deepcopy(defaults)
    _unknown_keys(section, given, defaults, errors)
    merged = deepcopy(defaults)
    merged.update({k: v for k, v in given.items() if k in defaults})
    return merged


# clean an experiment config: fill defaults and collect every offending field
# raises ConfigValidationError listing all of them at once
def clean_experiment_config(raw):
    errors = []
    if not isinstance(raw, dict):
        raise ConfigValidationError([f"config must be a JSON object, got {type(raw).__name__}"], context="experiment config")

    allowed = {
        "name", "scenario", "family", "model", "problem", "integrator", "controller",
        "mu", "sweep", "restarts", "master_seed", "metrics", "grid_res", "plots", "output_dir",
    }
    _unknown_keys("config", raw, allowed, errors)

    cfg = {}
    cfg["scenario"] = raw.get("scenario")
    if cfg["scenario"] not in scenarios:
        errors.append(f"scenario: must be one of {list(scenarios)}, got {cfg['scenario']!r}")
    cfg["name"] = str(raw.get("name", cfg["scenario"]))

    family = str(raw.get("family", "oim")).lower()
    if family not in families:
        errors.append(f"family: must be one of {list(families)}, got {raw.get('family')!r}")
    cfg["family"] = family

    cfg["model"] = _merge("model", raw.get("model"), default_model, errors)
    cfg["problem"] = _merge("problem", raw.get("problem"), {**default_problem, "path": None}, errors)
    cfg["integrator"] = _merge("integrator", raw.get("integrator"), default_integrator, errors)
    cfg["metrics"] = _merge("metrics", raw.get("metrics"), {**default_metrics, "oracle": "auto"}, errors)

    if raw.get("controller") is None:
        cfg["controller"] = None
    else:
        sensor_defaults = {"oversample": 20, "period": 0.2, "amplitude": 1.0, "quant_bits": None, "dump": False}
        controller = _merge("controller", raw["controller"], {**default_controller, "sensor": None}, errors)
        if controller["sensor"] is not None:
            controller["sensor"] = _merge("controller.sensor", controller["sensor"], sensor_defaults, errors)
        cfg["controller"] = controller

    problem = cfg["problem"]
    if problem["source"] not in ("generate", "file"):
        errors.append(f"problem.source: must be 'generate' or 'file', got {problem['source']!r}")
    if problem["source"] == "file":
        if not problem["path"]:
            errors.append("problem.path: required when problem.source is 'file'")
        elif not os.path.exists(problem["path"]):
            errors.append(f"problem.path: file does not exist: {problem['path']}")
    else:
        if not isinstance(problem["n"], int) or problem["n"] < 1:
            errors.append(f"problem.n: must be a positive integer, got {problem['n']!r}")
        if not isinstance(problem["instances"], int) or problem["instances"] < 1:
            errors.append(f"problem.instances: must be a positive integer, got {problem['instances']!r}")
        elif cfg["scenario"] == "single_run" and problem["instances"] > 1:
            errors.append(f"problem.instances: single_run keeps one trajectory per machine, so it takes 1 instance, got {problem['instances']}")
    if problem["bias_mode"] not in ("native", "augment"):
        errors.append(f"problem.bias_mode: must be 'native' or 'augment', got {problem['bias_mode']!r}")

    restarts = raw.get("restarts", 1)
    if not isinstance(restarts, int) or isinstance(restarts, bool) or restarts < 1:
        errors.append(f"restarts: must be an integer >= 1, got {restarts!r}")
    cfg["restarts"] = restarts

    master_seed = raw.get("master_seed", 0)
    if not isinstance(master_seed, int) or isinstance(master_seed, bool) or master_seed < 0:
        errors.append(f"master_seed: must be a non-negative integer, got {master_seed!r}")
    cfg["master_seed"] = master_seed

    sweep = raw.get("sweep", [])
    if not isinstance(sweep, list) or not all(_is_number(x) for x in sweep):
        errors.append("sweep: must be a list of numbers")
        sweep = []
    cfg["sweep"] = sweep
    if cfg["scenario"] in sweep_scenarios and len(sweep) == 0:
        errors.append(f"sweep: must be non-empty for scenario {cfg['scenario']!r}")
    if cfg["scenario"] == "restart_sweep" and any(int(x) != x or x < 1 for x in sweep):
        errors.append("sweep: restart counts must be positive integers")
    if cfg["scenario"] in ("mu_sweep", "noise_sweep") and any(x < 0 for x in sweep):
        errors.append("sweep: values must be >= 0")
    if cfg["scenario"] == "tau_sweep" and any(x <= 0 for x in sweep):
        errors.append("sweep: tau values must be > 0")

    mu = raw.get("mu", (cfg["controller"] or {}).get("mu_prime", 1.0))
    if not _is_number(mu) or mu < 0:
        errors.append(f"mu: must be a number >= 0, got {mu!r}")
    cfg["mu"] = mu

    if cfg["scenario"] in ("compare", "tau_sweep") and cfg["controller"] is None:
        errors.append(f"controller: required for scenario {cfg['scenario']!r}")

    grid_res = raw.get("grid_res", 24)
    if not isinstance(grid_res, int) or grid_res < 11:
        errors.append(f"grid_res: must be an integer >= 11, got {grid_res!r}")
    cfg["grid_res"] = grid_res
    if cfg["scenario"] == "theory_check" and problem["source"] == "generate" \
            and isinstance(problem["n"], int) and problem["n"] > grid_check_cap:
        errors.append(f"problem.n: theory_check supports n <= {grid_check_cap}, got {problem['n']}")

    oracle = cfg["metrics"]["oracle"]
    if oracle not in (True, False, "auto"):
        errors.append(f"metrics.oracle: must be true, false or 'auto', got {oracle!r}")
    if cfg["metrics"]["norm"] not in ("max_entry", "row_sum", "frobenius"):
        errors.append(f"metrics.norm: must be max_entry, row_sum or frobenius, got {cfg['metrics']['norm']!r}")

    plots = raw.get("plots", [])
    if not isinstance(plots, list) or not all(k in ("energy_trace", "sweep_curve", "mu_trace") for k in plots):
        errors.append("plots: must be a list drawn from energy_trace, sweep_curve, mu_trace")
        plots = []
    cfg["plots"] = plots
    cfg["output_dir"] = raw.get("output_dir", os.path.join("results", cfg["name"]))

    if errors:
        raise ConfigValidationError(errors, context="experiment config")

    if problem["source"] == "generate" and problem["n"] > brute_force_cap and oracle is True:
        warnings.warn(f"oracle requested for n={problem['n']} beyond the brute-force cap", UserWarning)
    print(f"Experiment config appears valid: {cfg['name']} ({cfg['scenario']}, family {cfg['family']})")
    return cfg


# check a table holds the columns a consumer needs
def check_columns(df, required_columns, context):
    missing = [col for col in required_columns if col not in df.columns]
    if missing:
        print(f"Error: {context} is missing columns: {missing}")
        return False
    return True


# check the output directory exists or can be created
def check_output_dir(output_dir):
    try:
        os.makedirs(output_dir, exist_ok=True)
    except OSError as e:
        print(f"Error: cannot create output directory {output_dir}: {e}")
        return False
    if not os.access(output_dir, os.W_OK):
        print(f"Error: output directory is not writable: {output_dir}")
        return False
    return True

import os
import numpy as np

# shared constants, default parameter tables, seed fan-out and error types

__version__ = "0.4.0"

# SpinModel value grid: {0, ±0.1, ..., ±1.0}
spinmodel_values = np.round(np.arange(-10, 11) / 10.0, 1)
spinmodel_values_no_zero = spinmodel_values[spinmodel_values != 0]

# resource caps
brute_force_cap = 24
grid_check_cap = 4

# metric constants
success_constant = 1.35
convergence_threshold = 0.025
convergence_window = 0.025
exact_success_tolerance = 1e-9

# family names accepted in config files
families = ("oim", "brim", "rosc", "go")

# initial state ranges per family, (low, high)
# OIM draws on the half-open interval [0, 2π)
init_ranges = {
    "oim": (0.0, 2 * np.pi),
    "brim": (-10.0, 10.0),
    "rosc": (-1.0, 1.0),
    "go": (-1.0, 1.0),
}

# grid bounds used by the equivalence grid check
grid_bounds = {
    "oim": (0.0, 2 * np.pi),
    "brim": (-3.0, 3.0),
    "rosc": (-3.0, 3.0),
    "go": (-3.0, 3.0),
}

# default configuration blocks, overridden by experiment config files
default_model = {
    "brim_bound": 10.0,
    "brim_scale": 0.1,
    "rosc_slope": 1.0,
    "rosc_amplitude": 10.0,
    "go_epsilon": 1e-3,
}

default_integrator = {
    "dt": 1e-2,
    "max_time": 20.0,
    "noise_gamma": 0.0,
    "seed": 0,
    "record_every": 10,
    "noise_mode": "wiener",
    "record_states": False,
    "stop_on_convergence": False,
}

default_controller = {
    "beta": 0.5,
    "eta": 1.0,
    "tau": 0.5,
    "mu_prime": 1.0,
    "clip_bound": None,          # None -> 4 * mu_prime
    "norm_mode": "l2",
    "grad_floor": 1e-6,
    "reference_mu": None,        # None -> 4 * mu_prime
    "literal_energy_norm": False,
    "sensor_feedback": False,
    "min_active_slices": 2,      # adaptive slices before the convergence rule may fire
}

default_problem = {
    "source": "generate",
    "n": 20,
    "instances": 20,
    "include_zero": True,
    "bias_mode": "native",
}

default_metrics = {
    "norm": "max_entry",
    "success_constant": success_constant,
}

scenarios = (
    "compare",
    "mu_sweep",
    "tau_sweep",
    "restart_sweep",
    "noise_sweep",
    "single_run",
    "theory_check",
)
sweep_scenarios = ("mu_sweep", "tau_sweep", "restart_sweep", "noise_sweep", "theory_check")

# CLI exit codes
exit_ok = 0
exit_config_error = 2
exit_resource_cap = 3


# errors
class ContractViolation(ValueError):
    """Raised when an operation is called outside its preconditions."""


class ProblemValidationError(ValueError):
    """Raised when J/h break the IsingProblem invariants."""


class ProblemFileError(ValueError):
    """Raised when a problem file cannot be parsed."""


class ConfigValidationError(ValueError):
    """Raised when a configuration is invalid. Lists every offending field."""

    def __init__(self, fields, context="config"):
        self.fields = list(fields)
        super().__init__(f"invalid {context}: " + "; ".join(self.fields))


class ResourceCapError(RuntimeError):
    """Raised when an exhaustive computation would exceed its size cap."""


class DivergenceError(ArithmeticError):
    """Raised when the drift becomes non-finite during integration."""

    def __init__(self, t, index):
        self.t = t
        self.index = index
        super().__init__(f"non-finite drift at phase time t={t:.6g}, oscillator index {index}")


class MissingSeriesError(KeyError):
    """Raised when a chart is requested for a series the bundle does not hold."""


class UndefinedMetricError(ValueError):
    """Raised when a metric has no defined value for the given problem."""


# seed fan-out: one seed per (master, key...) tuple, kept below 2**63 so it fits an int64 column
def derive_seed(master_seed, *keys):
    keys = tuple(int(k) for k in keys)
    ss = np.random.SeedSequence(int(master_seed), spawn_key=keys)
    return int(ss.generate_state(1, dtype=np.uint64)[0]) >> 1


# worker count from the environment, defaults to a single worker
def threads_from_env(default=1):
    value = os.environ.get("CAIM_THREADS")
    if value is None or value.strip() == "":
        return default
    try:
        threads = int(value)
    except ValueError:
        print(f"Warning: CAIM_THREADS={value!r} is not an integer, using {default}")
        return default
    return max(1, threads)

# time integration of autonomous AIM and controlled CAIM dynamics
import json
import warnings
from collections import deque
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from resources import (
    default_integrator,
    init_ranges,
    convergence_threshold,
    convergence_window,
    ConfigValidationError,
    ContractViolation,
    DivergenceError,
)
from ising import hamiltonian
from models import grad, repr_energy, binar_terms, decide, saturate_drift, wrap_phase

trajectory_columns = ["t", "E", "K", "R", "H_decision"]
noise_modes = ("wiener", "per_step")


@dataclass(frozen=True)
class IntegratorConfig:
    dt: float = default_integrator["dt"]
    max_time: float = default_integrator["max_time"]
    noise_gamma: float = default_integrator["noise_gamma"]
    seed: int = default_integrator["seed"]
    record_every: int = default_integrator["record_every"]
    noise_mode: str = default_integrator["noise_mode"]
    record_states: bool = default_integrator["record_states"]
    stop_on_convergence: bool = default_integrator["stop_on_convergence"]
    convergence_threshold: float = convergence_threshold
    convergence_window: float = convergence_window

    def __post_init__(self):
        errors = []
        if not self.dt > 0:
            errors.append(f"dt must be > 0, got {self.dt}")
        if not self.max_time >= self.dt:
            errors.append(f"max_time must be >= dt, got {self.max_time}")
        if not self.noise_gamma >= 0:
            errors.append(f"noise_gamma must be >= 0, got {self.noise_gamma}")
        if int(self.record_every) != self.record_every or self.record_every < 1:
            errors.append(f"record_every must be a positive integer, got {self.record_every}")
        if self.noise_mode not in noise_modes:
            errors.append(f"noise_mode must be one of {list(noise_modes)}, got {self.noise_mode!r}")
        if not self.convergence_threshold > 0:
            errors.append(f"convergence_threshold must be > 0, got {self.convergence_threshold}")
        if not self.convergence_window > 0:
            errors.append(f"convergence_window must be > 0, got {self.convergence_window}")
        if errors:
            raise ConfigValidationError(errors, context="integrator config")

    @property
    def total_steps(self):
        return int(round(self.max_time / self.dt))


@dataclass
class Trajectory:
    samples: pd.DataFrame
    states: list = field(default_factory=list)
    converged_at: float = None
    best_H: float = float("inf")
    best_spins: np.ndarray = None
    t_end: float = 0.0
    zero_crossings: int = 0
    waveforms: pd.DataFrame = None

    @property
    def t_run(self):
        # runtime of the run: convergence time, or the full horizon when detection never fired
        return self.converged_at if self.converged_at is not None else self.t_end


def make_rng(cfg):
    return np.random.default_rng(int(cfg.seed))


def step(m, p, psi, mu_vec, cfg, rng=None, t=0.0):
    """
    One Euler–Maruyama step of dψ = (-∇K - μ⊙∇R) dt + Γ dW.

    Args:
        m (AimModel): model family.
        p (IsingProblem): problem.
        psi (np.ndarray): current state, length n.
        mu_vec (np.ndarray): per-oscillator μ, length n.
        cfg (IntegratorConfig): step size and noise settings.
        rng (np.random.Generator, optional): noise stream; required when Γ > 0.
        t (float): current phase time, used in diagnostics only.

    Returns:
        np.ndarray: the next state.

    Raises:
        DivergenceError: if the drift is not finite.
    """
    psi = np.asarray(psi, dtype=float)
    mu_vec = np.asarray(mu_vec, dtype=float)
    if not np.all(np.isfinite(mu_vec)):
        raise ContractViolation("mu vector must be finite")
    grad_K, grad_R = grad(m, p, psi)
    drift = -grad_K - mu_vec * grad_R
    finite = np.isfinite(drift)
    if not np.all(finite):
        raise DivergenceError(t, int(np.flatnonzero(~finite)[0]))
    drift = saturate_drift(m, drift)
    psi_next = psi + cfg.dt * drift
    if cfg.noise_gamma > 0:
        if rng is None:
            rng = make_rng(cfg)
        if cfg.noise_mode == "wiener":
            psi_next = psi_next + cfg.noise_gamma * np.sqrt(cfg.dt) * rng.standard_normal(psi.shape)
        else:
            # bounded perturbation of magnitude at most Γ per step
            psi_next = psi_next + cfg.noise_gamma * rng.uniform(-1.0, 1.0, psi.shape)
    return wrap_phase(m, psi_next)


def detect_convergence(window_E, E_init, E_now, threshold=convergence_threshold):
    # (max - min) over the window relative to the net descent so far
    if not E_init > E_now:
        return False
    window_E = np.asarray(window_E, dtype=float)
    ratio = (window_E.max() - window_E.min()) / (E_init - E_now)
    return bool(ratio <= threshold)


def sample_initial(m, n, seed):
    low, high = init_ranges[m.family]
    rng = np.random.default_rng(int(seed))
    return rng.uniform(low, high, size=n)


def monitored_energy(m, p, psi, mu):
    """Return (E, K, R) with E = K + Σ μ_i R_i."""
    K = repr_energy(m, p, psi)
    terms = binar_terms(m, psi)
    return K + float(terms @ np.broadcast_to(mu, terms.shape)), K, float(terms.sum())


def integrate(m, p, psi0, cfg, mu_schedule, monitor_mu, verbose=False, detect_after=0.0):
    """
    Shared integration loop for autonomous and controlled runs.

    mu_schedule(k, t, psi) returns the μ vector applied over step k. The
    monitored energy uses the fixed monitor_mu, so the convergence rule sees
    the same Lyapunov function for every step.

    The first time the convergence rule fires at t >= detect_after is kept as
    converged_at (the run time). Integration continues to max_time unless
    cfg.stop_on_convergence is set.
    """
    psi = wrap_phase(m, np.array(psi0, dtype=float))
    if psi.shape != (p.n,):
        raise ContractViolation(f"initial state has shape {psi.shape}, problem has n={p.n}")
    rng = make_rng(cfg)
    total_steps = cfg.total_steps
    window_steps = cfg.convergence_window / cfg.dt

    rows = []
    states = []
    window = deque()
    best_H = float("inf")
    best_spins = None
    converged_at = None
    E_init = None
    crossings = 0
    k = 0

    def record(k, t, E, K, R):
        nonlocal best_H, best_spins
        spins = decide(m, psi)
        H = hamiltonian(p, spins)
        rows.append((t, E, K, R, H))
        if cfg.record_states:
            states.append(psi.copy())
        if H < best_H:
            best_H = H
            best_spins = spins

    while True:
        t = k * cfg.dt
        E, K, R = monitored_energy(m, p, psi, monitor_mu)
        if E_init is None:
            E_init = E
        window.append((k, E))
        while window[0][0] < k - window_steps - 1e-9:
            window.popleft()

        done = k >= total_steps
        if converged_at is None and k >= window_steps - 1e-9 and t >= detect_after - 1e-12:
            if detect_convergence([e for _, e in window], E_init, E, cfg.convergence_threshold):
                converged_at = t
                done = done or cfg.stop_on_convergence

        if done or k % cfg.record_every == 0:
            record(k, t, E, K, R)
        if done:
            break

        mu_vec = mu_schedule(k, t, psi)
        psi_next = step(m, p, psi, mu_vec, cfg, rng, t)
        if m.family == "go":
            crossings += int(np.count_nonzero(np.sign(psi_next) != np.sign(psi)))
        psi = psi_next
        k += 1

    if crossings:
        warnings.warn(f"GO trajectory crossed phi=0 {crossings} times; integrated with sgn(0)=0", UserWarning)
    if verbose:
        status = f"converged at t={converged_at:.4g}" if converged_at is not None else "no convergence"
        status += f", ran to t={t:.4g}"
        print(f"{m.family} run finished: {status}, best H={best_H:.6g}")

    samples = pd.DataFrame(rows, columns=trajectory_columns)
    traj = Trajectory(
        samples=samples,
        states=states,
        converged_at=converged_at,
        best_H=best_H,
        best_spins=best_spins,
        t_end=t,
        zero_crossings=crossings,
    )
    return traj, psi


def run_autonomous(m, p, psi0, mu, cfg, verbose=False):
    mu_vec = np.full(p.n, float(mu))
    return integrate(m, p, psi0, cfg, lambda k, t, psi: mu_vec, float(mu), verbose=verbose)


def write_trajectory_csv(traj, path):
    try:
        traj.samples.to_csv(path, index=False, float_format="%.12g")
    except OSError as e:
        raise OSError(f"could not write trajectory to {path}: {e}") from e


def write_states_jsonl(traj, path):
    # one JSON object per recorded sample: {"t": ..., "psi": [...]}
    if not traj.states:
        raise ValueError("trajectory holds no state snapshots; run with record_states=True")
    with open(path, "w") as f:
        for t, psi in zip(traj.samples["t"], traj.states):
            f.write(json.dumps({"t": float(t), "psi": [float(x) for x in psi]}) + "\n")

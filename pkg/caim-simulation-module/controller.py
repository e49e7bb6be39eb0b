# CAIM sampled-feedback control: adaptive injection law, CLF direction,
# zero-order-hold slicing with a one-slice delay, and the asynchronous momentum recurrence
import warnings
from dataclasses import dataclass

import numpy as np
import pandas as pd

from resources import default_controller, ConfigValidationError, ContractViolation
from models import grad, binar_terms, repr_energy, state_difference
from dynamics import integrate
from sensor import WaveformConfig, PhaseSensor

norm_modes = ("l2", "l1")


@dataclass(frozen=True)
class ControllerConfig:
    beta: float = default_controller["beta"]
    eta: float = default_controller["eta"]
    tau: float = default_controller["tau"]
    mu_prime: float = default_controller["mu_prime"]
    clip_bound: float = default_controller["clip_bound"]
    norm_mode: str = default_controller["norm_mode"]
    grad_floor: float = default_controller["grad_floor"]
    reference_mu: float = default_controller["reference_mu"]
    literal_energy_norm: bool = default_controller["literal_energy_norm"]
    sensor_feedback: bool = default_controller["sensor_feedback"]
    min_active_slices: int = default_controller["min_active_slices"]
    sensor: WaveformConfig = None

    def __post_init__(self):
        # unset bounds follow the reference strength
        if self.clip_bound is None:
            object.__setattr__(self, "clip_bound", 4.0 * self.mu_prime)
        if self.reference_mu is None:
            object.__setattr__(self, "reference_mu", 4.0 * self.mu_prime)
        if self.sensor is None:
            object.__setattr__(self, "sensor", WaveformConfig())
        errors = []
        if not 0 <= self.beta < 1:
            errors.append(f"beta must be in [0, 1), got {self.beta}")
        if not self.eta >= 0:
            errors.append(f"eta must be >= 0, got {self.eta}")
        if not self.tau > 0:
            errors.append(f"tau must be > 0, got {self.tau}")
        if not self.mu_prime > 0:
            errors.append(f"mu_prime must be > 0, got {self.mu_prime}")
        if not self.clip_bound > 0:
            errors.append(f"clip_bound must be > 0, got {self.clip_bound}")
        if self.norm_mode not in norm_modes:
            errors.append(f"norm_mode must be one of {list(norm_modes)}, got {self.norm_mode!r}")
        if not self.grad_floor > 0:
            errors.append(f"grad_floor must be > 0, got {self.grad_floor}")
        if int(self.min_active_slices) != self.min_active_slices or self.min_active_slices < 0:
            errors.append(f"min_active_slices must be a non-negative integer, got {self.min_active_slices}")
        if errors:
            raise ConfigValidationError(errors, context="controller config")


@dataclass
class SliceBuffer:
    psi_km1: np.ndarray = None
    psi_km2: np.ndarray = None
    k: int = 0
    held_mu: np.ndarray = None

    def push(self, sample):
        self.psi_km2 = self.psi_km1
        self.psi_km1 = None if sample is None else np.array(sample, dtype=float)

    @property
    def ready(self):
        return self.psi_km1 is not None and self.psi_km2 is not None


def injection_terms(m, p, psi_km1, psi_km2, cfg):
    """
    The two terms of the adaptive injection law, before clipping.

    Returns:
        tuple: (momentum, gradient_term, signal) as length-n vectors, where
        signal = ∇E'⊙∇R is the unnormalized gradient direction.
    """
    n = p.n
    grad_K, grad_R = grad(m, p, psi_km1)
    grad_E = grad_K + cfg.mu_prime * grad_R
    v = grad_E * grad_R

    # 1/∇R is undefined at R extrema: those elements carry no momentum
    momentum = np.zeros(n)
    safe = np.abs(grad_R) >= cfg.grad_floor
    diff = state_difference(m, psi_km1, psi_km2)
    momentum[safe] = -cfg.beta * diff[safe] / grad_R[safe]

    if cfg.literal_energy_norm:
        E_prime = repr_energy(m, p, psi_km1) + cfg.mu_prime * float(binar_terms(m, psi_km1).sum())
        scaled = E_prime * grad_R
    else:
        scaled = v
    if cfg.norm_mode == "l1":
        factor, denom = float(n), np.linalg.norm(scaled, 1)
    else:
        factor, denom = np.sqrt(n), np.linalg.norm(scaled, 2)
    if denom == 0:
        gradient_term = np.zeros(n)
    else:
        gradient_term = cfg.eta * factor / denom * v
    return momentum, gradient_term, v


def adaptive_mu(m, p, buf, cfg):
    """
    μ^(k) from the two buffered samples ψ^(k-1), ψ^(k-2).

    When both terms vanish because the samples carry no signal (zero
    ∇E'⊙∇R and no motion) the held μ is returned unchanged.
    """
    if not buf.ready:
        raise ContractViolation("slice buffer must hold two samples")
    momentum, gradient_term, signal = injection_terms(m, p, buf.psi_km1, buf.psi_km2, cfg)
    if not np.any(signal) and not np.any(momentum):
        warnings.warn(f"controller stagnation at slice {buf.k}: keeping held mu", UserWarning)
        return np.array(buf.held_mu, dtype=float)
    return np.clip(momentum + gradient_term, -cfg.clip_bound, cfg.clip_bound)


def clf_direction(m, p, psi, mu_prime):
    """
    Steepest-descent control direction for E' = K + μ'R.

    Returns:
        tuple: (mu_parallel, alpha_star, degenerate). mu_parallel is the unit
        vector along diag(∂R/∂ψ)·∇E'; alpha_star = ∇E'ᵀ∇K. Any coefficient
        c >= -alpha_star/‖diag(∂R/∂ψ)·∇E'‖ on mu_parallel keeps dE'/dt <= 0.
    """
    grad_K, grad_R = grad(m, p, psi)
    grad_E = grad_K + mu_prime * grad_R
    direction = grad_R * grad_E
    alpha_star = float(grad_E @ grad_K)
    norm = np.linalg.norm(direction)
    if norm == 0:
        warnings.warn("CLF direction is degenerate (zero vector)", UserWarning)
        return np.zeros_like(direction), alpha_star, True
    return direction / norm, alpha_star, False


class SliceSchedule:
    """
    Zero-order-hold μ schedule used by the integrator.

    At each slice boundary the state (or its sensed estimate) is buffered
    after μ for the new slice has been computed from the two earlier samples.
    """

    def __init__(self, m, p, ctrl, steps_per_slice, dt, reference_index=None, verbose=False):
        self.m = m
        self.p = p
        self.ctrl = ctrl
        self.steps_per_slice = steps_per_slice
        self.dt = dt
        self.reference_index = reference_index
        self.verbose = verbose
        self.buffer = SliceBuffer(held_mu=np.full(p.n, ctrl.mu_prime))
        self.rows = []
        self.sensor = PhaseSensor(p.n, ctrl.sensor) if ctrl.sensor_feedback else None

    def _mu_for_slice(self, j):
        buf = self.buffer
        buf.k = j
        if j < 2:
            return np.full(self.p.n, self.ctrl.mu_prime)
        if not buf.ready:
            warnings.warn(f"phase estimate unavailable at slice {j}: keeping held mu", UserWarning)
            return buf.held_mu.copy()
        return adaptive_mu(self.m, self.p, buf, self.ctrl)

    def __call__(self, k, t, psi):
        if self.sensor is not None:
            self.sensor.feed(t, psi)
        if k % self.steps_per_slice == 0:
            j = k // self.steps_per_slice
            mu = self._mu_for_slice(j)
            if self.reference_index is not None:
                mu[self.reference_index] = self.ctrl.reference_mu
            self.buffer.held_mu = mu
            self.rows.append((j, j * self.steps_per_slice * self.dt, *mu))
            sample = self.sensor.phases(t) if self.sensor is not None else psi
            self.buffer.push(sample)
            if self.verbose and j % 10 == 0:
                print(f"slice {j}: mean mu={mu.mean():.4g}, max |mu|={np.abs(mu).max():.4g}")
        return self.buffer.held_mu

    def trace(self):
        columns = ["k", "t_start"] + [f"mu_{i}" for i in range(self.p.n)]
        return pd.DataFrame(self.rows, columns=columns)


def steps_per_slice(ctrl, icfg):
    if ctrl.tau < icfg.dt * (1 - 1e-9):
        raise ConfigValidationError([f"tau ({ctrl.tau}) must be >= dt ({icfg.dt})"], context="controller config")
    return max(1, int(round(ctrl.tau / icfg.dt)))


def run_controlled(m, p, psi0, ctrl, icfg, reference_index=None, verbose=False):
    """
    Integrate the controlled dynamics with μ held constant over each slice of length τ.

    The convergence rule counts only from (2 + ctrl.min_active_slices)·τ, after
    the bootstrap slices and that many adaptive ones. With a sensing controller
    the trajectory carries the waveform dump when ctrl.sensor.dump is set.

    Args:
        m (AimModel): model family.
        p (IsingProblem): problem; pass reference_index=0 for a bias-augmented problem.
        psi0 (np.ndarray): initial state.
        ctrl (ControllerConfig): control law settings.
        icfg (IntegratorConfig): integrator settings.
        reference_index (int, optional): oscillator pinned at ctrl.reference_mu.
        verbose (bool): print per-slice progress.

    Returns:
        tuple: (Trajectory, mu_trace DataFrame, final state).

    Raises:
        ConfigValidationError: if τ < dt, or sensor feedback is requested for a
            family other than OIM, a problem with bias, or a sampling grid finer than dt.
    """
    sps = steps_per_slice(ctrl, icfg)
    if ctrl.sensor_feedback:
        errors = []
        if m.family != "oim":
            errors.append(f"sensor_feedback requires the oim family, got {m.family!r}")
        if np.any(p.h != 0):
            errors.append("sensor_feedback requires a bias-free problem (use bias_mode 'augment')")
        if ctrl.sensor.sample_interval < icfg.dt * (1 - 1e-9):
            errors.append(f"sensor sample interval {ctrl.sensor.sample_interval} must be >= dt {icfg.dt}")
        if errors:
            raise ConfigValidationError(errors, context="controller config")
    schedule = SliceSchedule(m, p, ctrl, sps, icfg.dt, reference_index=reference_index, verbose=verbose)
    # the two bootstrap slices run at μ'; convergence counts only after adaptive slices have acted
    detect_after = (2 + ctrl.min_active_slices) * sps * icfg.dt
    traj, final = integrate(m, p, psi0, icfg, schedule, ctrl.mu_prime, verbose=verbose, detect_after=detect_after)
    if schedule.sensor is not None:
        traj.waveforms = schedule.sensor.waveforms()
    return traj, schedule.trace(), final


# #####################################################################################
# asynchronous momentum
# #####################################################################################

def async_momentum_step(theta_t, theta_tm1, theta_tm2, grad_tm1, beta, eta):
    # θ(t+1) = θ(t) + β(θ(t-1) - θ(t-2)) - η∇J(θ(t-1))
    if not 0 <= beta < 1:
        raise ContractViolation(f"beta must be in [0, 1), got {beta}")
    if not eta > 0:
        raise ContractViolation(f"eta must be > 0, got {eta}")
    theta_t = np.asarray(theta_t, dtype=float)
    return theta_t + beta * (np.asarray(theta_tm1) - np.asarray(theta_tm2)) - eta * np.asarray(grad_tm1)


def run_async_momentum(objective, gradient, theta0, beta, eta, steps, optimum=0.0, grad_noise=0.0, seed=0):
    """
    Drive the delayed momentum recurrence from θ(0) = θ(-1) = θ(-2) = theta0.

    grad_noise adds zero-mean Gaussian noise of that standard deviation to
    every gradient evaluation.

    Returns:
        pd.DataFrame: columns t, objective, suboptimality, running_avg, grad_norm.
    """
    rng = np.random.default_rng(int(seed))
    theta_t = np.array(theta0, dtype=float)
    theta_tm1 = theta_t.copy()
    theta_tm2 = theta_t.copy()
    values = np.empty(steps)
    grad_norms = np.empty(steps)
    for t in range(steps):
        g = np.asarray(gradient(theta_tm1), dtype=float)
        if grad_noise > 0:
            g = g + grad_noise * rng.standard_normal(g.shape)
        grad_norms[t] = np.linalg.norm(g)
        theta_next = async_momentum_step(theta_t, theta_tm1, theta_tm2, g, beta, eta)
        theta_tm2, theta_tm1, theta_t = theta_tm1, theta_t, theta_next
        values[t] = objective(theta_t)
    sub = values - optimum
    return pd.DataFrame({
        "t": np.arange(1, steps + 1),
        "objective": values,
        "suboptimality": sub,
        "running_avg": np.cumsum(sub) / np.arange(1, steps + 1),
        "grad_norm": grad_norms,
    })


def regret_floor(eta, beta, lipschitz, grad_bound):
    """Steady-state term η²L(1+β)C²/(2(1-β)²) of the average-regret bound."""
    return eta ** 2 * lipschitz * (1 + beta) * grad_bound ** 2 / (2 * (1 - beta) ** 2)

# AIM energy families: representation energy K, binarization energy R,
# analytic gradients, decision function and extremum states
#
# every function accepts a single state of length n or a batch of shape (..., n)
from dataclasses import dataclass

import numpy as np

from resources import families, default_model, ConfigValidationError, ContractViolation


@dataclass(frozen=True)
class AimModel:
    family: str
    brim_bound: float = default_model["brim_bound"]
    brim_scale: float = default_model["brim_scale"]
    rosc_slope: float = default_model["rosc_slope"]
    rosc_amplitude: float = default_model["rosc_amplitude"]
    go_epsilon: float = default_model["go_epsilon"]

    def __post_init__(self):
        family = str(self.family).lower()
        object.__setattr__(self, "family", family)
        errors = []
        if family not in families:
            errors.append(f"family must be one of {list(families)}, got {self.family!r}")
        for field in ("brim_bound", "brim_scale", "rosc_slope", "rosc_amplitude", "go_epsilon"):
            value = getattr(self, field)
            if not (np.isfinite(value) and value > 0):
                errors.append(f"{field} must be > 0, got {value}")
        if errors:
            raise ConfigValidationError(errors, context="model")


@dataclass(frozen=True)
class EnergyBreakdown:
    K: float
    R: float
    E: float
    mu_used: np.ndarray


def _state(p, psi):
    psi = np.asarray(psi, dtype=float)
    if p is not None and (psi.ndim == 0 or psi.shape[-1] != p.n):
        raise ContractViolation(f"state has length {psi.shape[-1] if psi.ndim else 0}, problem has n={p.n}")
    return psi


def _quadratic(J, a, b=None):
    b = a if b is None else b
    return np.einsum("...i,ij,...j->...", a, J, b)


def _scalar(x):
    return float(x) if np.ndim(x) == 0 else x


def go_map(psi):
    # g(φ) = sgn(φ)·exp(-φ²/2), with sgn(0) = 0
    return np.sign(psi) * np.exp(-0.5 * psi ** 2)


def spin_map(m, psi):
    """Single-spin map σ(φ) that K couples through (OIM uses cos φ)."""
    psi = np.asarray(psi, dtype=float)
    if m.family == "oim":
        return np.cos(psi)
    if m.family == "brim":
        return psi
    if m.family == "rosc":
        return np.tanh(m.rosc_slope * psi)
    return go_map(psi)


def repr_energy(m, p, psi):
    psi = _state(p, psi)
    if m.family == "oim":
        c, s = np.cos(psi), np.sin(psi)
        # Σ J_ij cos(φi - φj) expands to c^T J c + s^T J s
        K = _quadratic(p.J, c) + _quadratic(p.J, s) + c @ p.h
    else:
        sigma = spin_map(m, psi)
        K = _quadratic(p.J, sigma) + sigma @ p.h
    return _scalar(K)


def binar_terms(m, psi):
    psi = np.asarray(psi, dtype=float)
    if m.family == "oim":
        return -np.cos(2 * psi)
    if m.family == "brim":
        return (psi ** 2 - 1) ** 2
    if m.family == "rosc":
        return -np.abs(psi)
    return psi ** 2


def binar_energy(m, psi):
    """
    Binarization energy R and its per-oscillator terms.

    Returns:
        tuple: (R, terms) where R = terms.sum(axis=-1).
    """
    terms = binar_terms(m, psi)
    return _scalar(terms.sum(axis=-1)), terms


def grad(m, p, psi):
    """
    Analytic gradients of K and R.

    At the non-smooth points the subgradient 0 is returned: ∂R/∂φ for ROSC at
    φ = 0 and ∂K/∂φ for GO at φ = 0 (sgn(0) = 0 makes g and g' vanish there).

    Returns:
        tuple: (grad_K, grad_R), both with the shape of psi.
    """
    psi = _state(p, psi)
    if m.family == "oim":
        c, s = np.cos(psi), np.sin(psi)
        grad_K = -2.0 * (s * (c @ p.J) - c * (s @ p.J)) - p.h * s
        grad_R = 2.0 * np.sin(2 * psi)
    elif m.family == "brim":
        grad_K = 2.0 * (psi @ p.J) + p.h
        grad_R = 4.0 * psi * (psi ** 2 - 1)
    elif m.family == "rosc":
        sigma = np.tanh(m.rosc_slope * psi)
        grad_K = (2.0 * (sigma @ p.J) + p.h) * m.rosc_slope * (1 - sigma ** 2)
        grad_R = -np.sign(psi)
    else:
        g = go_map(psi)
        g_prime = -np.abs(psi) * np.exp(-0.5 * psi ** 2)
        grad_K = (2.0 * (g @ p.J) + p.h) * g_prime
        grad_R = 2.0 * psi
    return grad_K, grad_R


def decide(m, psi):
    # ties (argument exactly 0) resolve to +1
    psi = np.asarray(psi, dtype=float)
    arg = np.cos(psi) if m.family == "oim" else psi
    return np.where(arg >= 0, 1, -1)


def extremum_state(m, s):
    s = np.asarray(s, dtype=float)
    if m.family == "oim":
        return np.where(s > 0, 0.0, np.pi)
    if m.family == "brim":
        return s.copy()
    if m.family == "rosc":
        return s * m.rosc_amplitude
    return s * m.go_epsilon


def energy_breakdown(m, p, psi, mu):
    """E = K + Σ μ_i R_i for a scalar or per-oscillator μ."""
    psi = _state(p, psi)
    mu_used = np.broadcast_to(np.asarray(mu, dtype=float), psi.shape[-1:]).copy()
    K = repr_energy(m, p, psi)
    terms = binar_terms(m, psi)
    R = _scalar(terms.sum(axis=-1))
    E = _scalar(K + terms @ mu_used)
    return EnergyBreakdown(K=K, R=R, E=E, mu_used=mu_used)


def saturate_drift(m, drift):
    # BRIM only: B·tanh(s·x), identity near zero when B·s = 1
    if m.family != "brim":
        return drift
    return m.brim_bound * np.tanh(m.brim_scale * drift)


def wrap_phase(m, psi):
    if m.family != "oim":
        return psi
    wrapped = np.mod(psi, 2 * np.pi)
    # np.mod can round a tiny negative up to exactly 2π
    return np.where(wrapped >= 2 * np.pi, 0.0, wrapped)


def state_difference(m, a, b):
    """a - b, wrapped into (-π, π] for OIM phases."""
    d = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    if m.family != "oim":
        return d
    return np.pi - np.mod(np.pi - d, 2 * np.pi)

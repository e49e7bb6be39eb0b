# Ising problem representation, SpinModel generation, Hamiltonian and the exact small-n oracle
import json
from dataclasses import dataclass

import numpy as np

from resources import (
    spinmodel_values,
    spinmodel_values_no_zero,
    brute_force_cap,
    ContractViolation,
    ProblemValidationError,
    ProblemFileError,
    ResourceCapError,
)
from check import check_problem_payload


@dataclass(frozen=True, eq=False)
class IsingProblem:
    """
    Dense Ising problem H(s) = s^T J s + h^T s.

    J is stored symmetric with a zero diagonal; both arrays are read-only
    after construction so a problem can be shared across threads.
    """
    J: np.ndarray
    h: np.ndarray

    def __post_init__(self):
        J = np.array(self.J, dtype=float)
        h = np.array(self.h, dtype=float)
        if J.ndim != 2 or J.shape[0] != J.shape[1]:
            raise ProblemValidationError(f"J must be a square matrix, got shape {J.shape}")
        if J.shape[0] == 0:
            raise ContractViolation("problem must have at least one spin")
        if h.ndim != 1 or h.shape[0] != J.shape[0]:
            raise ProblemValidationError(f"h must have length {J.shape[0]}, got shape {h.shape}")
        if not (np.all(np.isfinite(J)) and np.all(np.isfinite(h))):
            raise ProblemValidationError("J and h must be finite")
        if not np.array_equal(J, J.T):
            i, j = np.argwhere(J != J.T)[0]
            raise ProblemValidationError(f"J is not symmetric: J[{i}][{j}]={J[i, j]} but J[{j}][{i}]={J[j, i]}")
        diag = np.diagonal(J)
        if np.any(diag != 0):
            i = int(np.flatnonzero(diag)[0])
            raise ProblemValidationError(f"J diagonal must be zero: J[{i}][{i}]={diag[i]}")
        J.setflags(write=False)
        h.setflags(write=False)
        object.__setattr__(self, "J", J)
        object.__setattr__(self, "h", h)

    @property
    def n(self):
        return self.J.shape[0]

    def __eq__(self, other):
        if not isinstance(other, IsingProblem):
            return NotImplemented
        return np.array_equal(self.J, other.J) and np.array_equal(self.h, other.h)

    __hash__ = None


@dataclass(frozen=True)
class EnergyLevels:
    levels: np.ndarray
    degeneracy: np.ndarray

    @property
    def gap(self):
        # H1 - H0, infinite when every configuration shares one level
        if len(self.levels) < 2:
            return float("inf")
        return float(self.levels[1] - self.levels[0])


def _check_spins(p, s):
    s = np.asarray(s, dtype=float)
    if s.ndim == 0 or s.shape[-1] != p.n:
        raise ContractViolation(f"spin configuration has length {s.shape[-1] if s.ndim else 0}, problem has n={p.n}")
    return s


def hamiltonian(p, s):
    """
    H(s) = s^T J s + h^T s, summing over all ordered pairs.

    Accepts a single configuration of length n or a batch of shape (..., n).
    """
    s = _check_spins(p, s)
    energy = np.einsum("...i,ij,...j->...", s, p.J, s) + s @ p.h
    if energy.ndim == 0:
        return float(energy)
    return energy


def generate_spinmodel(n, seed, include_zero=True):
    # couplings for i<j and all biases drawn uniformly from the value grid
    if n < 1:
        raise ContractViolation(f"n must be at least 1, got {n}")
    values = spinmodel_values if include_zero else spinmodel_values_no_zero
    rng = np.random.default_rng(int(seed))
    upper = np.triu_indices(n, k=1)
    J = np.zeros((n, n))
    J[upper] = rng.choice(values, size=len(upper[0]))
    J = J + J.T
    h = rng.choice(values, size=n)
    return IsingProblem(J, h)


def spins_from_index(indices, n):
    """Map enumeration indices to spin configurations; bit b of the index set means s_b = -1."""
    indices = np.asarray(indices, dtype=np.uint64)
    bits = (indices[:, None] >> np.arange(n, dtype=np.uint64)) & np.uint64(1)
    return 1.0 - 2.0 * bits.astype(float)


def brute_force_ground(p, chunk_size=1 << 16):
    """
    Exhaustive ground-state search over all 2^n configurations.

    Args:
        p (IsingProblem): problem with n <= 24.
        chunk_size (int): configurations evaluated per batch.

    Returns:
        tuple: (H0, ground_set, levels) with ground_set a list of spin vectors
        in enumeration order and levels an EnergyLevels instance.

    Raises:
        ResourceCapError: if n exceeds the brute-force cap.
    """
    n = p.n
    if n > brute_force_cap:
        raise ResourceCapError(f"brute force refused: n={n} exceeds the cap of {brute_force_cap} spins")

    total = 1 << n
    energies = np.empty(total)
    for start in range(0, total, chunk_size):
        stop = min(start + chunk_size, total)
        S = spins_from_index(np.arange(start, stop, dtype=np.uint64), n)
        energies[start:stop] = np.einsum("ki,ij,kj->k", S, p.J, S) + S @ p.h

    H0 = float(energies.min())
    # distinct levels are merged at 1e-9 so float summation order cannot split a level
    levels, counts = np.unique(np.round(energies, 9), return_counts=True)
    ground_idx = np.flatnonzero(energies <= H0 + 1e-9)
    ground_set = [s.astype(int) for s in spins_from_index(ground_idx, n)]
    return H0, ground_set, EnergyLevels(levels=levels, degeneracy=counts)


def augment_bias(p):
    # reference node 0 carries the bias as coupling h_i/2 in each direction
    n = p.n
    J = np.zeros((n + 1, n + 1))
    J[1:, 1:] = p.J
    J[0, 1:] = p.h / 2.0
    J[1:, 0] = p.h / 2.0
    return IsingProblem(J, np.zeros(n + 1))


def store_problem(p, path):
    payload = {"n": p.n, "J": p.J.tolist(), "h": p.h.tolist()}
    try:
        with open(path, "w") as f:
            json.dump(payload, f, indent=1)
            f.write("\n")
    except OSError as e:
        raise OSError(f"could not write problem file {path}: {e}") from e


def load_problem(path):
    try:
        with open(path) as f:
            text = f.read()
    except OSError as e:
        raise ProblemFileError(f"could not read problem file {path}: {e}") from e
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as e:
        raise ProblemFileError(f"{path}: line {e.lineno} column {e.colno}: {e.msg}") from e

    errors = check_problem_payload(payload)
    if errors:
        raise ProblemFileError(f"{path}: " + "; ".join(errors))
    return IsingProblem(payload["J"], payload["h"])

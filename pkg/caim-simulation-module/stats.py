# evaluation metrics: estimated approximation ratio, success estimate, time-to-solution,
# the small-n equivalence grid check, aggregation and paired significance tests
import warnings
from dataclasses import dataclass, asdict

import numpy as np
import pandas as pd
from scipy.stats import wilcoxon

from resources import (
    success_constant,
    grid_check_cap,
    grid_bounds,
    exact_success_tolerance,
    ContractViolation,
    ResourceCapError,
    UndefinedMetricError,
)
from ising import brute_force_ground
from models import repr_energy, binar_terms, decide

norms = ("max_entry", "row_sum", "frobenius")


@dataclass(frozen=True)
class RunMetrics:
    bestH: float
    r: float
    pHat: float
    tRun: float
    tts: float
    converged: bool


@dataclass(frozen=True)
class EquivalenceReport:
    muTested: float
    minEnergyGround: float
    minEnergyExcited: float
    equivalent: bool


def coupling_norm(J, norm="max_entry"):
    J = np.asarray(J, dtype=float)
    if norm == "max_entry":
        return float(np.abs(J).max())
    if norm == "row_sum":
        return float(np.abs(J).sum(axis=1).max())
    if norm == "frobenius":
        # ‖J‖_F / √n, the same order as the max entry for dense instances
        return float(np.linalg.norm(J, "fro") / np.sqrt(J.shape[0]))
    raise ValueError(f"unknown norm {norm!r}, expected one of {list(norms)}")


def approx_ratio(p, H, norm="max_entry"):
    """
    r = 1/2 - H / (2(√n·‖J‖ + ‖h‖₁)).

    Raises:
        UndefinedMetricError: for the all-zero problem.
    """
    denom = np.sqrt(p.n) * coupling_norm(p.J, norm) + np.abs(p.h).sum()
    if denom <= 0:
        raise UndefinedMetricError("approximation ratio is undefined for an all-zero problem")
    return 0.5 - H / (2.0 * denom)


def success_estimate(n, r, constant=success_constant):
    if n < 1:
        raise ContractViolation(f"n must be at least 1, got {n}")
    p_hat = np.exp(-np.sqrt(n) * (constant - r))
    if p_hat >= 1:
        if r > constant:
            warnings.warn(f"success estimate clamped to 1 (r={r:.4g} exceeds {constant})", UserWarning)
        return 1.0
    return float(p_hat)


def tts(t_run, p_hat):
    """
    Time to reach 99% confidence of seeing the ground state: t_run·log(0.01)/log(1 - P̂).

    The raw formula drops below t_run once P̂ > 0.99, but no search is shorter
    than one run, so the value is clamped at t_run. It is strictly decreasing
    in P̂ on (0, 0.99], equal to t_run on [0.99, 1], and approaches t_run from
    above as P̂ rises to 0.99. P̂ <= 0 gives inf.
    """
    if t_run < 0:
        raise ContractViolation(f"tRun must be >= 0, got {t_run}")
    if p_hat <= 0:
        return float("inf")
    if p_hat >= 1:
        return float(t_run)
    return float(t_run * max(1.0, np.log(0.01) / np.log1p(-p_hat)))


def run_metrics(p, best_H, t_run, converged, norm="max_entry", constant=success_constant):
    r = approx_ratio(p, best_H, norm)
    p_hat = success_estimate(p.n, r, constant)
    return RunMetrics(bestH=float(best_H), r=float(r), pHat=p_hat, tRun=float(t_run),
                      tts=tts(t_run, p_hat), converged=bool(converged))


def equivalence_check_grid(m, p, mu, grid_res, bounds=None, ground_set=None, chunk_size=1 << 15):
    """
    Compare the minimum of E = K + μR over the ground-state decision cells with
    the minimum over all other cells, on a dense grid.

    Args:
        m (AimModel): model family.
        p (IsingProblem): problem with n <= 4.
        mu (float): uniform injection strength.
        grid_res (int): points per axis, at least 11.
        bounds (tuple, optional): (low, high) per axis; defaults to the family bounds.
            OIM grids are half-open so 2π is not sampled twice.
        ground_set (list, optional): ground configurations; computed by brute force when absent.

    Returns:
        EquivalenceReport

    Raises:
        ResourceCapError: if n exceeds the grid cap.
    """
    n = p.n
    if n > grid_check_cap:
        raise ResourceCapError(f"grid check refused: n={n} exceeds the cap of {grid_check_cap} spins")
    if grid_res < 11:
        raise ContractViolation(f"grid_res must be at least 11, got {grid_res}")
    low, high = bounds if bounds is not None else grid_bounds[m.family]
    axis = np.linspace(low, high, grid_res, endpoint=(m.family != "oim"))
    if ground_set is None:
        _, ground_set, _ = brute_force_ground(p)
    bit_weights = 2 ** np.arange(n)
    ground_codes = np.array([int((np.asarray(s) < 0) @ bit_weights) for s in ground_set])

    best_ground = np.inf
    best_excited = np.inf
    total = grid_res ** n
    powers = grid_res ** np.arange(n)
    for start in range(0, total, chunk_size):
        idx = np.arange(start, min(start + chunk_size, total))
        psi = axis[(idx[:, None] // powers) % grid_res]
        E = repr_energy(m, p, psi) + mu * binar_terms(m, psi).sum(axis=-1)
        codes = (decide(m, psi) < 0) @ bit_weights
        in_ground = np.isin(codes, ground_codes)
        if in_ground.any():
            best_ground = min(best_ground, float(E[in_ground].min()))
        if (~in_ground).any():
            best_excited = min(best_excited, float(E[~in_ground].min()))
    return EquivalenceReport(
        muTested=float(mu),
        minEnergyGround=best_ground,
        minEnergyExcited=best_excited,
        equivalent=bool(best_ground <= best_excited),
    )


def aggregate(results, ground_truth=None, tolerance=exact_success_tolerance):
    """
    Summary statistics over a list of RunMetrics.

    ground_truth is a single H₀ or one H₀ per run (runs pooled over instances).

    Returns:
        dict: instances-independent summary with mean/max r, exact_success
        (None without ground truth), pHat_mean, tRun_mean, tts_median.
    """
    if len(results) == 0:
        raise ContractViolation("aggregate needs at least one run")
    if ground_truth is not None and np.ndim(ground_truth) > 0 and len(ground_truth) != len(results):
        raise ContractViolation(f"ground_truth has {len(ground_truth)} entries for {len(results)} runs")
    df = pd.DataFrame([asdict(r) for r in results])
    summary = {
        "runs": len(df),
        "mean_r": float(df["r"].mean()),
        "max_r": float(df["r"].max()),
        "exact_success": None,
        "pHat_mean": float(df["pHat"].mean()),
        "tRun_mean": float(df["tRun"].mean()),
        "tts_median": float(df["tts"].median()),
        "converged_fraction": float(df["converged"].mean()),
    }
    if ground_truth is not None:
        hits = np.abs(df["bestH"].to_numpy() - np.asarray(ground_truth, dtype=float)) <= tolerance
        summary["exact_success"] = float(hits.mean())
    return summary


def is_hit(best_H, ground_truth, tolerance=exact_success_tolerance):
    return bool(abs(best_H - ground_truth) <= tolerance)


def paired_success_test(df_runs, value_column, baseline="aim", treatment="caim"):
    """
    Wilcoxon signed-rank test of per-instance means, treatment vs baseline.

    Returns:
        dict: statistic, p_value and the number of paired instances; NaN when
        the test is undefined (all differences zero or too few pairs).
    """
    required = {"machine", "instance", value_column}
    missing = required - set(df_runs.columns)
    if missing:
        raise ValueError(f"Missing required columns in DataFrame: {sorted(missing)}")
    means = df_runs.groupby(["instance", "machine"])[value_column].mean().unstack("machine")
    if baseline not in means.columns or treatment not in means.columns:
        return {"statistic": np.nan, "p_value": np.nan, "pairs": 0}
    means = means[[baseline, treatment]].dropna()
    diffs = means[treatment] - means[baseline]
    try:
        stat, p_value = wilcoxon(diffs, alternative="two-sided", correction=True)
    except ValueError:
        stat, p_value = np.nan, np.nan
    return {"statistic": float(stat), "p_value": float(p_value), "pairs": int(len(diffs))}

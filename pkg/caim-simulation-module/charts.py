# create SVG charts for experiment bundles: energy traces, sweep curves and mu staircases

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import pandas as pd
import seaborn as sns

from resources import MissingSeriesError

# fixed hash salt keeps SVG element ids identical between runs
plt.rcParams["svg.hashsalt"] = "caim-simulation"


def _require_frame(df, columns):
    if not isinstance(df, pd.DataFrame):
        raise TypeError("Input 'df' must be a pandas DataFrame.")
    missing_columns = [col for col in columns if col not in df.columns]
    if missing_columns:
        raise ValueError(f"Missing required columns in DataFrame: {missing_columns}")


def _axes(ax, figsize):
    if ax is None:
        return plt.subplots(figsize=figsize)
    return ax.figure, ax


chart_kinds = ("energy_trace", "sweep_curve", "mu_trace")
time_label = "phase time t (A_s = 1)"
energy_label = "energy (dimensionless)"


# energy trace chart
def create_energy_trace_chart(df, title=None, ax=None, figsize=(10, 6)):
    """
    Plots E, K and R against phase time for a single run.

    Args:
        df (pd.DataFrame): Trajectory samples with columns t, E, K, R.
        title (str, optional): The title for the chart. Defaults to "Energy trace".
        ax (matplotlib.axes.Axes, optional): An existing Axes object to plot on.
                                             If None, a new figure and axes are created.
        figsize (tuple, optional): The size of the figure to create if ax is None.

    Returns:
        tuple: A tuple containing:
            - fig (matplotlib.figure.Figure): The Figure object for the plot.
            - ax (matplotlib.axes.Axes): The Axes object containing the plot.

    Raises:
        ValueError: If specified columns are not found in the DataFrame.
        TypeError: If the input df is not a pandas DataFrame.
    """
    _require_frame(df, ("t", "E", "K", "R"))
    fig, ax = _axes(ax, figsize)

    long = df.melt(id_vars="t", value_vars=["E", "K", "R"], var_name="component", value_name="energy")
    sns.lineplot(data=long, x="t", y="energy", hue="component", ax=ax, legend="auto")

    ax.set_title(title or "Energy trace", fontsize=14, fontweight="bold")
    ax.set_xlabel(time_label, fontsize=12)
    ax.set_ylabel(energy_label, fontsize=12)
    ax.grid(True, linestyle="--", alpha=0.6)
    fig.tight_layout()
    return fig, ax


# sweep curve chart
def create_sweep_chart(df, y_column, x_label="sweep value", title=None, ax=None, figsize=(10, 6)):
    """
    Plots one metric against the sweep axis, one line per machine.

    Args:
        df (pd.DataFrame): Summary rows with columns machine, sweep_value and y_column.
        y_column (str): The metric to plot.
        x_label (str, optional): Label for the sweep axis.
        title (str, optional): The title for the chart.
        ax (matplotlib.axes.Axes, optional): An existing Axes object to plot on.
        figsize (tuple, optional): The size of the figure to create if ax is None.

    Returns:
        tuple: (fig, ax)
    """
    _require_frame(df, ("machine", "sweep_value", y_column))
    fig, ax = _axes(ax, figsize)

    data = df.dropna(subset=["sweep_value", y_column]).copy()
    data["sweep_value"] = data["sweep_value"].astype(float)
    data[y_column] = data[y_column].astype(float)
    data = data.sort_values(["machine", "sweep_value"])
    sns.lineplot(data=data, x="sweep_value", y=y_column, hue="machine", marker="o", ax=ax, legend="auto")

    ax.set_title(title or f"{y_column} over {x_label}", fontsize=14, fontweight="bold")
    ax.set_xlabel(x_label, fontsize=12)
    ax.set_ylabel(y_column, fontsize=12)
    ax.grid(True, linestyle="--", alpha=0.6)
    fig.tight_layout()
    return fig, ax


# mu staircase chart
def create_mu_trace_chart(df, title=None, ax=None, figsize=(10, 6)):
    """Zero-order-hold staircase of every mu_i, with steps exactly at the slice starts."""
    _require_frame(df, ("t_start",))
    mu_columns = [col for col in df.columns if col.startswith("mu_")]
    if not mu_columns:
        raise ValueError("Missing required columns in DataFrame: mu_*")
    fig, ax = _axes(ax, figsize)

    palette = sns.color_palette("husl", len(mu_columns))
    for color, col in zip(palette, mu_columns):
        ax.step(df["t_start"], df[col], where="post", color=color, linewidth=1, label=col)
    if len(mu_columns) <= 10:
        ax.legend(loc="best", fontsize=8)

    ax.set_title(title or "Injection strength per oscillator", fontsize=14, fontweight="bold")
    ax.set_xlabel(time_label, fontsize=12)
    ax.set_ylabel("mu (dimensionless)", fontsize=12)
    ax.grid(True, linestyle="--", alpha=0.6)
    fig.tight_layout()
    return fig, ax


sweep_labels = {
    "mu_sweep": "injection strength mu",
    "tau_sweep": "slice period tau (phase time)",
    "restart_sweep": "restarts per instance",
    "noise_sweep": "noise strength Gamma",
    "theory_check": "injection strength mu",
}


def sweep_metric(summary):
    # oracle hit rate when available, otherwise the estimated approximation ratio
    if "equivalent_fraction" in summary.columns:
        return "equivalent_fraction"
    if "exact_success" in summary.columns and summary["exact_success"].notna().any():
        return "exact_success"
    return "mean_r"


def emit_svg(bundle, kind, path, machine=None):
    """
    Render one chart kind from a result bundle to a self-contained SVG file.

    Args:
        bundle (ResultBundle): results holding the requested series.
        kind (str): one of energy_trace, sweep_curve, mu_trace.
        path (str): output file path.
        machine (str, optional): which trajectory to draw for energy_trace;
            defaults to caim when present, else aim.

    Raises:
        MissingSeriesError: if the bundle does not hold the series for kind.
    """
    if kind not in chart_kinds:
        raise ValueError(f"unknown chart kind {kind!r}, expected one of {list(chart_kinds)}")

    if kind == "energy_trace":
        names = [f"trajectory_{machine}"] if machine else ["trajectory_caim", "trajectory_aim"]
        name = next((n for n in names if n in bundle.traces), None)
        if name is None:
            raise MissingSeriesError(f"bundle holds no trajectory for energy_trace (looked for {names})")
        fig, _ = create_energy_trace_chart(bundle.traces[name], title=f"Energy trace ({name.split('_', 1)[1]})")
    elif kind == "mu_trace":
        if "mu_trace" not in bundle.traces:
            raise MissingSeriesError("bundle holds no mu_trace; run a single_run scenario with a controller")
        fig, _ = create_mu_trace_chart(bundle.traces["mu_trace"])
    else:
        summary = bundle.summary
        if summary.empty or "sweep_value" not in summary.columns or summary["sweep_value"].notna().sum() == 0:
            raise MissingSeriesError("bundle holds no sweep points for sweep_curve")
        scenario = bundle.provenance.get("scenario", "")
        fig, _ = create_sweep_chart(summary, sweep_metric(summary), x_label=sweep_labels.get(scenario, "sweep value"))

    try:
        fig.savefig(path, format="svg", metadata={"Date": None})
    finally:
        plt.close(fig)
    return path

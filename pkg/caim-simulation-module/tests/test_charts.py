import numpy as np
import pandas as pd
import pytest

from batch import ResultBundle, summary_columns
from charts import (
    create_energy_trace_chart,
    create_sweep_chart,
    create_mu_trace_chart,
    sweep_metric,
    emit_svg,
)
from resources import MissingSeriesError


def trajectory_frame():
    t = np.linspace(0, 2, 21)
    E = np.exp(-t) - 3
    return pd.DataFrame({"t": t, "E": E, "K": E + 1, "R": -1 - np.exp(-t), "H_decision": np.full(21, -2.0)})


def mu_frame():
    k = np.arange(6)
    return pd.DataFrame({"k": k, "t_start": k * 0.5, "mu_0": [1, 1, 0.8, 0.9, 1.2, 1.1], "mu_1": [1, 1, 2, 1.5, 1.4, 1.3]})


def sweep_summary():
    rows = []
    for machine, offset in (("aim", 0.0), ("caim", 0.05)):
        for value in (0.5, 1.0, 2.0):
            rows.append({"machine": machine, "sweep_value": value, "instances": 4, "restarts": 2,
                         "mean_r": 0.8 + offset, "exact_success": 0.5 + offset, "pHat_mean": 0.3,
                         "tRun_mean": 5.0, "tts_median": 20.0})
    return pd.DataFrame(rows, columns=summary_columns)


def bundle(summary=None, traces=None, scenario="mu_sweep"):
    summary = summary if summary is not None else pd.DataFrame(columns=summary_columns)
    return ResultBundle(runs=pd.DataFrame(), summary=summary, provenance={"scenario": scenario}, traces=traces or {})


def test_energy_trace_chart_lines():
    fig, ax = create_energy_trace_chart(trajectory_frame())
    assert len(ax.get_lines()) >= 3
    assert ax.get_title() == "Energy trace"


def test_energy_trace_chart_validates_input():
    with pytest.raises(TypeError):
        create_energy_trace_chart([1, 2, 3])
    with pytest.raises(ValueError, match="Missing"):
        create_energy_trace_chart(trajectory_frame().drop(columns=["R"]))


def test_sweep_chart_one_line_per_machine():
    fig, ax = create_sweep_chart(sweep_summary(), "mean_r", x_label="mu")
    assert ax.get_xlabel() == "mu"
    assert len(ax.get_lines()) >= 2


def test_mu_trace_chart_steps_at_slice_starts():
    fig, ax = create_mu_trace_chart(mu_frame())
    lines = ax.get_lines()
    assert len(lines) == 2
    assert lines[0].get_drawstyle() == "steps-post"
    assert list(lines[0].get_xdata()) == list(mu_frame()["t_start"])


def test_mu_trace_chart_needs_mu_columns():
    with pytest.raises(ValueError):
        create_mu_trace_chart(pd.DataFrame({"k": [0], "t_start": [0.0]}))


def test_sweep_metric_prefers_oracle_hits():
    summary = sweep_summary()
    assert sweep_metric(summary) == "exact_success"
    assert sweep_metric(summary.assign(exact_success=None)) == "mean_r"
    assert sweep_metric(pd.DataFrame(columns=["equivalent_fraction"])) == "equivalent_fraction"


@pytest.mark.parametrize("kind", ["energy_trace", "sweep_curve", "mu_trace"])
def test_emit_svg_writes_file(tmp_path, kind):
    b = bundle(sweep_summary(), {"trajectory_caim": trajectory_frame(), "mu_trace": mu_frame()})
    path = emit_svg(b, kind, str(tmp_path / f"{kind}.svg"))
    text = open(path).read()
    assert text.lstrip().startswith("<?xml")
    assert "<svg" in text


def test_emit_svg_is_byte_stable(tmp_path):
    b = bundle(sweep_summary(), {"trajectory_aim": trajectory_frame()})
    emit_svg(b, "energy_trace", str(tmp_path / "a.svg"))
    emit_svg(b, "energy_trace", str(tmp_path / "b.svg"))
    assert (tmp_path / "a.svg").read_bytes() == (tmp_path / "b.svg").read_bytes()


def test_emit_svg_picks_requested_machine(tmp_path):
    b = bundle(traces={"trajectory_aim": trajectory_frame()})
    emit_svg(b, "energy_trace", str(tmp_path / "aim.svg"), machine="aim")
    with pytest.raises(MissingSeriesError):
        emit_svg(b, "energy_trace", str(tmp_path / "caim.svg"), machine="caim")


def test_emit_svg_missing_series(tmp_path):
    b = bundle()
    for kind in ("energy_trace", "sweep_curve", "mu_trace"):
        with pytest.raises(MissingSeriesError):
            emit_svg(b, kind, str(tmp_path / f"{kind}.svg"))
    assert not list(tmp_path.iterdir())


def test_emit_svg_unknown_kind(tmp_path):
    with pytest.raises(ValueError, match="unknown chart kind"):
        emit_svg(bundle(), "histogram", str(tmp_path / "x.svg"))

import json
import math
import subprocess
import sys

import numpy as np
import pytest

from mixedadc.closed_form import rate_closed_form
from mixedadc.experiment import (
    CSV_COLUMNS,
    PRESETS,
    ExperimentError,
    SpecError,
    all_finite,
    emit_plot_script,
    fmt,
    load_preset,
    load_spec,
    parse_power_spec,
    parse_spec,
    power_report,
    preset_text,
    power_rows_to_csv,
    read_csv,
    rows_to_csv,
    run_experiment,
    write_results,
)
from mixedadc.model import build_config
from mixedadc.quantizer import alpha_for_bits

SMALL = """\
[experiment]
name = small
axis = p_u_dB
values = -5, 5
methods = closed-form, monte-carlo-aqnm, high-power-limit

[system]
N = 10
b = 3

[montecarlo]
trials = 12
noise_draws_per_channel = 2
seed = 9

[case mixed]
M0 = 4
M1 = 12

[case full]
M0 = 16
M1 = 0
"""


def totals(rows):
    return {(r.sweep_value, r.case_id, r.method): r.se_bits for r in rows if r.user_index == "total"}


# -- parsing -------------------------------------------------------------------------


def test_parse_small_spec():
    spec = parse_spec(SMALL, "small.ini")
    assert spec.values == (-5.0, 5.0)
    assert [c.case_id for c in spec.cases] == ["mixed", "full"]
    assert spec.cases[0].M == 16 and spec.cases[0].b == 3
    assert spec.mc.trials == 12 and spec.mc.seed == 9
    assert spec.fading.N == 10


def test_start_stop_step():
    spec = parse_spec("[experiment]\nstart=0\nstop=1\nstep=0.1\naxis=kappa\n[case a]\nM=8\n")
    assert len(spec.values) == 11
    assert spec.values[-1] == 1.0


def test_bits_axis_accepts_inf():
    spec = parse_spec("[experiment]\naxis=bits\nvalues=1, 2, inf\n[case a]\nM0=1\nM1=3\n")
    assert spec.values == (1, 2, math.inf)


@pytest.mark.parametrize("name", PRESETS)
def test_presets_parse(name):
    spec = load_preset(name)
    assert spec.name == name and spec.fading.N == 10


def test_fig1_preset_cases():
    spec = load_preset("fig1")
    assert [(c.M0, c.M - c.M0) for c in spec.cases] == [(128, 0), (10, 118), (0, 128), (64, 0)]
    assert spec.values == (-10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0)


def test_explicit_and_drop_betas():
    spec = parse_spec("[experiment]\nvalues=0\n[system]\nN=3\n[fading]\nbetas=1e-3, 2e-3, 3e-3\n[case a]\nM0=2\nM1=2\n")
    np.testing.assert_allclose(spec.fading.betas, [1e-3, 2e-3, 3e-3])
    one = parse_spec("[experiment]\nvalues=0\n[system]\nN=4\n[fading]\nbetas=drop\nseed=3\n[case a]\nM0=2\nM1=2\n")
    two = parse_spec("[experiment]\nvalues=0\n[system]\nN=4\n[fading]\nbetas=drop\nseed=3\n[case a]\nM0=2\nM1=2\n")
    assert one.fading.N == 4
    assert np.array_equal(one.fading.betas, two.fading.betas)


@pytest.mark.parametrize(
    "text,fragment",
    [
        ("[experiment]\nvalues=\n[case a]\nM=4\n", "sweep list is empty"),
        ("[experiment]\nvalues=0\nmethods=\n[case a]\nM=4\n", "method list is empty"),
        ("[experiment]\naxis=kappa\nvalues=0.5, 1.2\n[case a]\nM=4\n", "[0, 1]"),
        ("[experiment]\nvalues=0\nmethods=guess\n[case a]\nM=4\n", "unknown method"),
        ("[experiment]\nvalues=0\n", "no [case"),
        ("[system]\nN=2\n", "missing [experiment]"),
        ("[experiment]\naxis=time\n[case a]\nM=4\n", "axis"),
        ("[experiment]\nvalues=0\n[system]\nN=2\n[case a]\nM=4\n", "betas given for N=2"),
    ],
)
def test_spec_errors(text, fragment):
    with pytest.raises(SpecError) as info:
        parse_spec(text, "bad.ini")
    assert fragment in str(info.value)
    assert "bad.ini" in str(info.value)


def test_error_reports_line_and_field():
    text = "[experiment]\nvalues = 0\n\n[system]\nN = 10\nb = zero\n[case a]\nM=4\n"
    with pytest.raises(SpecError) as info:
        parse_spec(text, "bad.ini")
    assert str(info.value).startswith("bad.ini:6: [system] b:")


def test_case_errors_name_the_section():
    with pytest.raises(SpecError) as info:
        parse_spec("[experiment]\nvalues=0\n[case a]\nM=4\nM0=9\n", "c.ini")
    assert "c.ini:5: [case a] M0" in str(info.value)
    with pytest.raises(SpecError):
        parse_spec("[experiment]\nvalues=0\n[case a]\nb=3\n", "c.ini")


def test_bad_ini_syntax():
    with pytest.raises(SpecError):
        parse_spec("no section header\n", "x.ini")


def test_missing_file(tmp_path):
    with pytest.raises(SpecError, match="cannot read"):
        load_spec(tmp_path / "absent.ini")


# -- execution -------------------------------------------------------------------------


def test_run_small_matches_direct_calls():
    spec = parse_spec(SMALL, "small.ini")
    rows = run_experiment(spec, workers=1)
    assert len(rows) == 2 * 2 * 3 * 11
    t = totals(rows)
    cfg = build_config(16, 4, 10, 5.0, 3)
    direct = rate_closed_form(cfg, spec.fading, alpha_for_bits(3)).total
    assert t[(5.0, "mixed", "closed-form")] == direct
    assert all_finite(rows)
    first = rows[0]
    assert first.sweep_value == -5.0 and first.case_id == "mixed" and first.user_index == 0


def test_rows_in_sweep_order_and_realized_kappa():
    text = "[experiment]\naxis=kappa\nvalues=0.0, 0.33, 1.0\n[system]\nb=2\n[case a]\nM=10\n"
    rows = run_experiment(parse_spec(text), workers=1)
    tot = [r for r in rows if r.user_index == "total"]
    assert [r.sweep_value for r in tot] == [0.0, 0.33, 1.0]
    assert [r.kappa_realized for r in tot] == [0.0, 0.3, 1.0]
    assert [r.power_watts for r in tot] == pytest.approx([1e-4 * 4 * 10 + 0.002, 3 * 0.43 + 1e-4 * 4 * 7 + 0.002, 4.3])


def test_unbounded_limit_is_reported_non_finite():
    text = "[experiment]\nvalues=0\nmethods=high-power-limit\n[system]\nN=1\n[fading]\nbetas=1e-3\n[case a]\nM0=4\nM1=0\n"
    rows = run_experiment(parse_spec(text), workers=1)
    assert not all_finite(rows)
    assert rows[-1].se_bits == math.inf


def test_non_finite_mc_aborts_with_diagnostics():
    text = ("[experiment]\nvalues=3000\nmethods=monte-carlo-aqnm\n[system]\nN=2\n"
            "[fading]\nbetas=1e10, 1\n[montecarlo]\ntrials=2\n[case a]\nM0=4\nM1=0\n")
    with np.errstate(all="ignore"), pytest.raises(ExperimentError, match="case=a"):
        run_experiment(parse_spec(text), workers=1)


def test_workers_do_not_change_rows():
    spec = parse_spec(SMALL)
    assert rows_to_csv(run_experiment(spec, workers=1)) == rows_to_csv(run_experiment(spec, workers=2))


# -- output -----------------------------------------------------------------------------


def test_fmt():
    assert fmt(None) == "" and fmt("total") == "total" and fmt(np.int64(3)) == "3"
    assert fmt(math.inf) == "inf" and fmt(1 / 3) == "0.333333333"
    assert fmt(12345.678901234) == "12345.6789"


def test_csv_header_and_rerun_identical(tmp_path):
    spec = parse_spec(SMALL, "small.ini")
    first = write_results(spec, run_experiment(spec, workers=1), tmp_path / "a")
    second = write_results(spec, run_experiment(spec, workers=1), tmp_path / "b")
    assert first.read_bytes() == second.read_bytes()
    header = first.read_text().splitlines()[0]
    assert header == ",".join(CSV_COLUMNS)
    meta = json.loads((tmp_path / "a" / "small.meta.json").read_text())
    assert "created" in meta and meta["mc"]["trials"] == 12
    assert (tmp_path / "a" / "plot_small.py").exists()


def test_unwritable_output(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    spec = parse_spec(SMALL)
    with pytest.raises(ExperimentError):
        write_results(spec, run_experiment(spec, workers=1)[:1], blocker / "sub")


def test_plot_script_fig1_curves(tmp_path):
    spec = load_preset("fig1")
    rows = [
        {"case_id": c.case_id, "method": m, "sweep_value": "0", "user_index": "total", "se_bits": "1"}
        for c in spec.cases
        for m in spec.methods
    ]
    script = emit_plot_script(rows, tmp_path / "fig1.csv")
    ns = {}
    text = script.read_text()
    curves_line = next(l for l in text.splitlines() if l.startswith("CURVES = "))
    exec(curves_line, ns)
    assert len(ns["CURVES"]) == 8
    assert "fig1.csv" in text and str(tmp_path) not in text


def test_plot_script_single_row_renders(tmp_path):
    pytest.importorskip("matplotlib")
    spec = parse_spec("[experiment]\nvalues=0\n[case a]\nM0=4\nM1=0\n", "one.ini")
    rows = [r for r in run_experiment(spec, workers=1) if r.user_index == "total"]
    path = tmp_path / "one.csv"
    path.write_text(rows_to_csv(rows))
    script = emit_plot_script(rows, path)
    result = subprocess.run([sys.executable, str(script)], capture_output=True, text=True)
    assert result.returncode == 0, result.stderr
    assert (tmp_path / "one.png").exists()


def test_plot_script_fails_without_csv(tmp_path):
    rows = [{"case_id": "a", "method": "closed-form"}]
    script = emit_plot_script(rows, tmp_path / "gone.csv")
    result = subprocess.run([sys.executable, str(script)], capture_output=True, text=True)
    assert result.returncode != 0
    assert "missing data file" in result.stderr


def test_plot_script_rejects_empty_table(tmp_path):
    with pytest.raises(ValueError):
        emit_plot_script([], tmp_path / "x.csv")


def test_read_csv_round_trip(tmp_path):
    spec = parse_spec(SMALL)
    rows = run_experiment(spec, workers=1)
    path = tmp_path / "r.csv"
    path.write_text(rows_to_csv(rows))
    back = read_csv(path)
    assert len(back) == len(rows)
    assert float(back[-1]["se_bits"]) == pytest.approx(rows[-1].se_bits, rel=1e-8)


# -- power report -------------------------------------------------------------------------


def test_power_report_reference_cases():
    rows = power_report([("c1", 128, 0, 4), ("c2", 10, 118, 4), ("c3", 0, 128, 4), ("c4", 64, 0, 4)])
    assert [round(r.power_watts, 4) for r in rows] == [55.04, 4.4908, 0.2068, 27.52]


def test_power_report_empty_and_unit():
    assert power_rows_to_csv(power_report([])) == "case_id,M0,M1,b,power_watts\n"
    assert power_report([("one", 1, 0, 4)])[0].power_watts == pytest.approx(0.43)


def test_power_spec_allows_no_cases():
    spec = parse_power_spec("[experiment]\nname=p\n[power]\nc1=0.02\n")
    assert spec.cases == () and spec.model.c1 == 0.02


def test_power_preset_matches_reference():
    spec = parse_power_spec(preset_text("power"), "power.ini")
    assert [round(r.power_watts, 4) for r in power_report(spec.cases, spec.model)] == [55.04, 4.4908, 0.2068, 27.52]

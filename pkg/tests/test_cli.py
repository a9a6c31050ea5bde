import json
from pathlib import Path

import numpy as np
import pytest

from mmwave_throttle.cli import main
from mmwave_throttle.power import load_registry, synthetic_truth
from mmwave_throttle.traces import TRACE_HEADER

GOLDEN = Path(__file__).parent / "golden"


def cli(*argv):
    try:
        return main([str(a) for a in argv])
    except SystemExit as exc:  # argparse usage errors
        return exc.code


def test_missing_file_is_io_error(tmp_path, capsys):
    missing = tmp_path / "nope.csv"
    assert cli("fit-power", "--in", missing, "--registry", tmp_path / "r.json") == 2
    assert str(missing) in capsys.readouterr().err


def test_malformed_trace_is_io_error(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text(",".join(TRACE_HEADER) + "\n0,x,0,0,0,0,1,0,high,1,,\n")
    assert cli("fit-power", "--in", bad, "--registry", tmp_path / "r.json") == 2


def test_rank_deficient_trace_is_model_error(tmp_path, capsys):
    trace = tmp_path / "t.csv"
    assert cli("gen-traces", "--out", trace, "--no-radio-off") == 0
    assert cli("fit-power", "--in", trace, "--registry", tmp_path / "r.json") == 3
    assert "bp_cpu_mw" in capsys.readouterr().err
    assert not (tmp_path / "r.json").exists()
    assert cli("fit-power", "--in", trace, "--registry", tmp_path / "r.json",
               "--fixed-bp-cpu", 500) == 0


def test_bad_arguments_are_config_errors(tmp_path):
    assert cli("sustain", "--out", tmp_path / "c.csv") == 4  # no threshold
    assert cli("sustain", "--threshold-c", "40", "--out", tmp_path / "c.csv",
               "--step", "0") == 4
    assert cli("simulate", "--threshold-c", "abc", "--out", tmp_path / "s.csv") == 4
    assert cli("no-such-command") == 4


def test_fit_power_recovers_truth(tmp_path):
    trace, reg = tmp_path / "t.csv", tmp_path / "reg.json"
    assert cli("gen-traces", "--out", trace) == 0
    assert cli("fit-power", "--in", trace, "--registry", reg) == 0
    model = load_registry(reg).get(0, "high")
    np.testing.assert_allclose(model.coefficients(), synthetic_truth().coefficients(),
                               rtol=1e-6)


def test_fit_power_updates_existing_registry(tmp_path):
    reg = tmp_path / "reg.json"
    for profile in ("high", "low"):
        trace = tmp_path / f"{profile}.csv"
        assert cli("gen-traces", "--out", trace, "--freq-profile", profile) == 0
        assert cli("fit-power", "--in", trace, "--registry", reg) == 0
    assert len(load_registry(reg)) == 2


def test_eval_power_key_not_in_registry(tmp_path, capsys):
    trace, reg = tmp_path / "t.csv", tmp_path / "reg.json"
    cli("gen-traces", "--out", trace)
    cli("fit-power", "--in", trace, "--registry", reg)
    other = tmp_path / "low.csv"
    cli("gen-traces", "--out", other, "--freq-profile", "low")
    assert cli("eval-power", "--in", other, "--registry", reg) == 3
    assert "low" in capsys.readouterr().err


def test_eval_power_golden_metrics(tmp_path):
    train, val, reg = tmp_path / "train.csv", tmp_path / "val.csv", tmp_path / "reg.json"
    report = tmp_path / "metrics.json"
    assert cli("gen-traces", "--design", "random", "--n", 300, "--noise-sigma", 100,
               "--seed", 11, "--out", train) == 0
    assert cli("gen-traces", "--design", "random", "--n", 120, "--noise-sigma", 100,
               "--seed", 12, "--out", val) == 0
    assert cli("fit-power", "--in", train, "--registry", reg) == 0
    assert cli("eval-power", "--in", val, "--registry", reg, "--report", report) == 0
    assert json.loads(report.read_text()) == json.loads(
        (GOLDEN / "eval_metrics.json").read_text())


def test_eval_power_table_and_predictions(tmp_path, capsys):
    trace, reg, preds = tmp_path / "t.csv", tmp_path / "reg.json", tmp_path / "p.csv"
    cli("gen-traces", "--out", trace)
    cli("fit-power", "--in", trace, "--registry", reg)
    capsys.readouterr()
    assert cli("eval-power", "--in", trace, "--registry", reg, "--out", preds) == 0
    out = capsys.readouterr().out
    assert "rho" in out and "1.000" in out and "RMSE" in out
    lines = preds.read_text().splitlines()
    assert lines[0] == "t_s,measured_mw,predicted_mw,residual_mw"
    assert len(lines) == 1 + 105


def test_fit_thermal_single_sample(tmp_path, capsys):
    trace = tmp_path / "t.csv"
    trace.write_text(",".join(TRACE_HEADER) + "\n0,0,0,0,0,0,1,0,high,2000,35,25\n")
    out_json = tmp_path / "r4.json"
    assert cli("fit-thermal", "--in", trace, "--out", out_json, "--threshold-c", 40) == 0
    assert "R4 = 0.005000 degC/mW" in capsys.readouterr().out
    doc = json.loads(out_json.read_text())
    assert doc["r4_c_per_mw"] == 0.005 and doc["throttle_threshold_c"] == 40


def test_fit_thermal_needs_temperatures(tmp_path):
    trace = tmp_path / "t.csv"
    cli("gen-traces", "--out", trace)
    assert cli("fit-thermal", "--in", trace) == 3


def test_sustain_from_thermal_fit(tmp_path):
    trace, r4, curve = tmp_path / "t.csv", tmp_path / "r4.json", tmp_path / "c.csv"
    assert cli("gen-traces", "--out", trace, "--ambient-c", "15,25,35") == 0
    assert cli("fit-thermal", "--in", trace, "--out", r4, "--threshold-c", 40) == 0
    assert cli("sustain", "--thermal", r4, "--out", curve) == 0
    rows = np.genfromtxt(curve, delimiter=",", skip_header=1)
    assert rows.shape == (25, 5)
    assert np.all(np.diff(rows[:, 1]) < 0) and np.all(np.diff(rows[:, 2]) <= 0)
    assert np.all(np.diff(rows[:, 3]) >= 0)
    assert rows[0].tolist() == pytest.approx([15, 5000, 1666.67, 12.2807, 1], rel=1e-5)


def test_sustain_malformed_thermal_doc(tmp_path):
    doc = tmp_path / "r4.json"
    doc.write_text('{"rmse_c": 1}')
    assert cli("sustain", "--thermal", doc, "--threshold-c", 40,
               "--out", tmp_path / "c.csv") == 2


def test_simulate_under_cap(tmp_path, capsys):
    out = tmp_path / "s.csv"
    assert cli("simulate", "--threshold-c", 45, "--ambient-c", 15, "--demand-mbps", 500,
               "--duration", 200, "--out", out) == 0
    summary = Path(str(out) + ".summary").read_text()
    assert "throttle_events=0" in summary
    assert "sustained_rate_mbps=500" in summary


def test_svg_does_not_change_csv(tmp_path):
    plain, with_svg = tmp_path / "a.csv", tmp_path / "b.csv"
    figs = tmp_path / "figs"
    figs.mkdir()
    args = ("sustain", "--threshold-c", 40)
    assert cli(*args, "--out", plain) == 0
    assert cli(*args, "--out", with_svg, "--svg", figs) == 0
    assert plain.read_bytes() == with_svg.read_bytes()
    names = sorted(p.name for p in figs.iterdir())
    assert names == ["sustain_max_rate.svg", "sustain_p_max.svg", "sustain_pct_reduction.svg"]
    assert all(p.read_text().lstrip().startswith("<?xml") for p in figs.iterdir())


def test_svg_is_deterministic(tmp_path):
    for d in ("a", "b"):
        (tmp_path / d).mkdir()
        assert cli("simulate", "--threshold-c", 45, "--duration", 100, "--out",
                   tmp_path / d / "s.csv", "--svg", tmp_path / d) == 0
    assert (tmp_path / "a" / "simulate.svg").read_bytes() == \
        (tmp_path / "b" / "simulate.svg").read_bytes()


def test_stress_matrix_command(tmp_path, capsys):
    out = tmp_path / "stress.csv"
    assert cli("stress-matrix", "--out", out) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "freq_profile_id,scenario,power_mw,skin_temp_c"
    assert len(lines) == 1 + 8
    assert "high,transceiver_only,5700," in out.read_text()


def test_fit_thermal_svg(tmp_path):
    trace = tmp_path / "t.csv"
    assert cli("gen-traces", "--out", trace, "--ambient-c", "20,30", "--temp-noise-c", 0.1) == 0
    assert cli("fit-thermal", "--in", trace, "--svg", tmp_path) == 0
    assert (tmp_path / "r4_fit.svg").stat().st_size > 0

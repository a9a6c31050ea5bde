import io
import statistics

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mmwave_throttle.errors import ConfigError, ModelError, TraceFormatError
from mmwave_throttle.power import PowerModel, predict_power
from mmwave_throttle.traces import (
    HIGH_FREQ_PROFILE, LOW_FREQ_PROFILE, TRACE_HEADER, CpuFreqProfile, TraceSample,
    TrainingGridConfig, format_traces, generate_training_grid, load_profiles,
    load_traces, sample_random_loads, save_profiles, save_traces, synth_traces,
)

from conftest import make_sample, samples

HEADER = ",".join(TRACE_HEADER)


def test_header_is_canonical():
    assert HEADER == ("t_s,ut_pct,u6_pct,u7_pct,dl_mbps,ul_mbps,i5g,channel_number,"
                      "freq_profile_id,power_mw,skin_temp_c,ambient_temp_c")


def test_load_three_rows():
    text = (HEADER + "\n"
            "0,10,5,0,100,5,1,3,high,2500,30.5,25\n"
            "1,0,0,0,0,0,0,3,high,480,,\n"
            "2,50,100,100,2000,0,1,3,high,,,0\n")
    out = load_traces(io.StringIO(text))
    assert len(out) == 3
    assert out[0] == TraceSample(0, 10, 5, 0, 100, 5, 1, 3, "high", 2500, 30.5, 25)
    assert out[1].skin_temp_c is None and out[1].ambient_temp_c is None
    assert out[2].power_mw is None
    assert out[2].ambient_temp_c == 0.0


def test_load_from_bytes_and_path(tmp_path):
    text = HEADER + "\n0,1,2,3,4,5,1,0,low,6,,\n"
    assert load_traces(io.BytesIO(text.encode()))[0].freq_profile_id == "low"
    p = tmp_path / "t.csv"
    p.write_text(text)
    assert load_traces(p) == load_traces(str(p))


def test_radio_off_with_downlink_names_field():
    text = HEADER + "\n0,0,0,0,100,0,0,0,high,,,\n"
    with pytest.raises(TraceFormatError, match="dl_mbps") as exc:
        load_traces(io.StringIO(text))
    assert exc.value.line == 2


@pytest.mark.parametrize("row, what", [
    ("0,0,0,0,0,0,1,0,high,,", "columns"),
    ("0,abc,0,0,0,0,1,0,high,,,", "ut_pct"),
    ("0,101,0,0,0,0,1,0,high,,,", "ut_pct"),
    ("0,0,0,0,0,0,2,0,high,,,", "i5g"),
    ("0,0,0,0,-1,0,1,0,high,,,", "dl_mbps"),
    ("0,0,0,0,0,0,1,0,high,-5,,", "power_mw"),
    ("0,0,0,0,0,0,1,0,,,,", "freq_profile_id"),
    ("0,0,0,0,0,0,1,0,high,nan,,", "power_mw"),
])
def test_bad_rows(row, what):
    with pytest.raises(TraceFormatError, match=what) as exc:
        load_traces(io.StringIO(HEADER + "\n" + row + "\n"))
    assert "line 2" in str(exc.value)


def test_time_must_not_go_backwards():
    text = HEADER + "\n5,0,0,0,0,0,1,0,high,,,\n4,0,0,0,0,0,1,0,high,,,\n"
    with pytest.raises(TraceFormatError, match="line 3"):
        load_traces(io.StringIO(text))


def test_empty_and_header_only_files():
    with pytest.raises(TraceFormatError, match="empty"):
        load_traces(io.StringIO(""))
    with pytest.raises(TraceFormatError):
        load_traces(io.StringIO(HEADER + "\n"))


def test_unknown_column_rejected():
    with pytest.raises(TraceFormatError, match="unknown columns"):
        load_traces(io.StringIO(HEADER + ",extra\n" + "0,0,0,0,0,0,1,0,high,,,,1\n"))


def test_save_single_sample():
    buf = io.StringIO()
    save_traces([make_sample(ut=12.5, dl=100.0, power_mw=2000.0)], buf)
    lines = buf.getvalue().split("\n")
    assert lines[0] == HEADER
    assert len(lines) == 3 and lines[2] == ""
    assert lines[1] == "0.0,12.5,0.0,0.0,100.0,0.0,1,0,high,2000.0,,"


def test_save_empty_is_an_error():
    with pytest.raises(TraceFormatError):
        save_traces([], io.StringIO())


def test_roundtrip_100_random_samples(rng, tmp_path):
    # random operating points with awkward floats, including temperature 0
    out = []
    for i in range(100):
        i5g = int(rng.integers(0, 2))
        out.append(TraceSample(
            float(i) * 0.1, *rng.uniform(0, 100, 3).tolist(),
            float(rng.uniform(0, 2000)) * i5g, float(rng.uniform(0, 200)) * i5g, i5g,
            int(rng.integers(0, 5)), str(rng.choice(["high", "low"])),
            float(rng.uniform(0, 9000)) if i % 3 else None,
            0.0 if i % 7 == 0 else float(rng.normal(35, 5)),
            float(rng.normal(25, 5)) if i % 2 else None))
    path = tmp_path / "rt.csv"
    save_traces(out, path)
    assert load_traces(path) == out
    raw = path.read_bytes()
    assert b"\r" not in raw


@settings(max_examples=60, deadline=None)
@given(st.lists(samples(), min_size=1, max_size=20))
def test_roundtrip_property(batch):
    batch = [TraceSample(float(i), *[getattr(s, f) for f in TRACE_HEADER[1:]])
             for i, s in enumerate(batch)]
    assert load_traces(io.StringIO(format_traces(batch))) == batch


def test_profiles_sidecar(tmp_path):
    path = tmp_path / "profiles.json"
    save_profiles([HIGH_FREQ_PROFILE, LOW_FREQ_PROFILE], path)
    loaded = load_profiles(path)
    assert loaded["high"].cluster_freqs_mhz == (1800.0, 2200.0, 2400.0)
    assert loaded["low"].cluster_freqs_mhz == (1070.0, 652.0, 1400.0)
    path.write_text('{"profiles": {"a": [1], "a": [2]}}')
    with pytest.raises(TraceFormatError, match="duplicate"):
        load_profiles(path)
    with pytest.raises(ConfigError):
        CpuFreqProfile("x", (0.0,))


# -- training grid -----------------------------------------------------------------

def test_grid_zero_cell():
    (s,) = generate_training_grid(TrainingGridConfig((0,), (0.0,)))
    assert (s.ut_pct, s.u6_pct, s.u7_pct, s.dl_mbps, s.ul_mbps) == (0, 0, 0, 0, 0)
    assert s.i5g == 1 and s.power_mw is None


def test_grid_four_threads_is_half_load():
    (s,) = generate_training_grid(TrainingGridConfig((4,), (0.0,), per_thread_usage_frac=0.125))
    assert s.ut_pct == 50.0


def test_grid_cardinality():
    grid = generate_training_grid(TrainingGridConfig((0, 1, 2, 4, 8), tuple(range(0, 1600, 100))))
    assert len(grid) == 80
    assert all(s.i5g == 1 and s.ul_mbps == 0 for s in grid)
    assert [s.t_s for s in grid] == sorted(s.t_s for s in grid)


def test_grid_extra_blocks():
    cfg = TrainingGridConfig((0, 2), (0.0, 500.0), ul_settings_mbps=(50.0,), include_5g_off=True)
    grid = generate_training_grid(cfg)
    assert len(grid) == 2 * 2 + 2 + 2
    assert sum(1 for s in grid if s.i5g == 0) == 2
    assert sum(1 for s in grid if s.ul_mbps == 50.0 and s.dl_mbps == 0) == 2


def test_grid_core_fill():
    cfg = TrainingGridConfig((0, 1, 2, 8), (0.0,))
    got = [(s.ut_pct, s.u7_pct, s.u6_pct) for s in generate_training_grid(cfg)]
    assert got == [(0, 0, 0), (12.5, 100, 0), (25, 100, 100), (100, 100, 100)]


def test_grid_percent_reading_of_thread_cost():
    cfg = TrainingGridConfig((10,), (0.0,), per_thread_usage_frac=0.00125)
    (s,) = generate_training_grid(cfg)
    assert s.ut_pct == pytest.approx(1.25)
    assert s.u7_pct == pytest.approx(10.0) and s.u6_pct == 0


def test_grid_over_full_load():
    with pytest.raises(ConfigError, match="exceeds"):
        generate_training_grid(TrainingGridConfig((9,), (0.0,)))
    with pytest.raises(ConfigError):
        generate_training_grid(TrainingGridConfig((1,), ()))


# -- synthetic traces -------------------------------------------------------------

def test_synth_zero_noise_is_exact(truth):
    grid = sample_random_loads(50, seed=3)
    out = synth_traces(truth, grid, 0.0, seed=1)
    assert [s.power_mw for s in out] == [predict_power(truth, s) for s in grid]


def test_synth_is_deterministic(truth):
    grid = sample_random_loads(50, seed=3)
    assert synth_traces(truth, grid, 50.0, 9) == synth_traces(truth, grid, 50.0, 9)
    assert synth_traces(truth, grid, 50.0, 9) != synth_traces(truth, grid, 50.0, 10)


def test_synth_noise_level(truth):
    grid = sample_random_loads(300, seed=4)
    out = synth_traces(truth, grid, 100.0, seed=5)
    resid = [s.power_mw - predict_power(truth, g) for s, g in zip(out, grid)]
    assert 80 <= statistics.stdev(resid) <= 120


def test_synth_key_mismatch(truth):
    grid = sample_random_loads(5, key=(1, "high"))
    with pytest.raises(ModelError, match="key"):
        synth_traces(truth, grid, 0.0, 0)


def test_emitted_samples_revalidate(truth):
    cfg = TrainingGridConfig((0, 1, 2, 4, 8), tuple(range(0, 2001, 250)),
                             ul_settings_mbps=(10.0,), include_5g_off=True)
    out = synth_traces(truth, generate_training_grid(cfg), 30.0, 0)
    assert load_traces(io.StringIO(format_traces(out))) == out

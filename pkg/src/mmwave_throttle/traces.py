"""Trace data model, CSV persistence and synthetic training traces.

A trace is a list of :class:`TraceSample` rows stored as CSV with a fixed
header (``TRACE_HEADER``). Optional cells (power, skin and ambient
temperature) are written empty; 0 is a legal temperature so no sentinel
values are used.

Noise for synthetic traces comes from ``numpy.random.default_rng(seed)``
(PCG64 bit generator, ``Generator.normal``), one draw per sample in row
order.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import ConfigError, ModelError, TraceFormatError

TRACE_HEADER = (
    "t_s", "ut_pct", "u6_pct", "u7_pct", "dl_mbps", "ul_mbps", "i5g",
    "channel_number", "freq_profile_id", "power_mw", "skin_temp_c",
    "ambient_temp_c",
)

_PCT_FIELDS = ("ut_pct", "u6_pct", "u7_pct")
_OPTIONAL_FIELDS = ("power_mw", "skin_temp_c", "ambient_temp_c")


@dataclass(frozen=True)
class CpuFreqProfile:
    id: str
    cluster_freqs_mhz: tuple

    def __post_init__(self):
        if not self.id:
            raise ConfigError("frequency profile id must be nonempty")
        freqs = tuple(float(f) for f in self.cluster_freqs_mhz)
        if not freqs or any(not (f > 0) for f in freqs):
            raise ConfigError(f"profile {self.id!r}: frequencies must be > 0")
        object.__setattr__(self, "cluster_freqs_mhz", freqs)


# The two cluster settings used for the stress experiments on the Pixel 5.
HIGH_FREQ_PROFILE = CpuFreqProfile("high", (1800.0, 2200.0, 2400.0))
LOW_FREQ_PROFILE = CpuFreqProfile("low", (1070.0, 652.0, 1400.0))


def load_profiles(path) -> dict:
    """Read a profile sidecar: ``{"profiles": {"<id>": [mhz, ...], ...}}``."""
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh, object_pairs_hook=_reject_duplicate_keys)
        except json.JSONDecodeError as exc:
            raise TraceFormatError(f"{path}: {exc}") from exc
    if not isinstance(doc, dict) or not isinstance(doc.get("profiles"), dict):
        raise TraceFormatError(f"{path}: expected an object with a 'profiles' map")
    return {pid: CpuFreqProfile(pid, tuple(freqs))
            for pid, freqs in doc["profiles"].items()}


def save_profiles(profiles: Iterable[CpuFreqProfile], path) -> None:
    doc = {"profiles": {p.id: list(p.cluster_freqs_mhz) for p in profiles}}
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def _reject_duplicate_keys(pairs):
    out = {}
    for k, v in pairs:
        if k in out:
            raise TraceFormatError(f"duplicate key {k!r}")
        out[k] = v
    return out


@dataclass(frozen=True)
class TraceSample:
    """One observation of the system variables, power and temperatures.

    Units: seconds, percent CPU usage in [0, 100], Mbps, mW, degrees C.
    """

    t_s: float
    ut_pct: float
    u6_pct: float
    u7_pct: float
    dl_mbps: float
    ul_mbps: float
    i5g: int
    channel_number: int
    freq_profile_id: str
    power_mw: Optional[float] = None
    skin_temp_c: Optional[float] = None
    ambient_temp_c: Optional[float] = None

    def __post_init__(self):
        for name in ("t_s", "dl_mbps", "ul_mbps") + _PCT_FIELDS:
            object.__setattr__(self, name, _finite(name, getattr(self, name)))
        for name in _OPTIONAL_FIELDS:
            value = getattr(self, name)
            if value is not None:
                object.__setattr__(self, name, _finite(name, value))

        for name in _PCT_FIELDS:
            if not 0.0 <= getattr(self, name) <= 100.0:
                raise TraceFormatError("must lie in [0, 100]", field=name)
        for name in ("dl_mbps", "ul_mbps"):
            if getattr(self, name) < 0:
                raise TraceFormatError("must be >= 0", field=name)
        if self.i5g not in (0, 1):
            raise TraceFormatError("must be 0 or 1", field="i5g")
        object.__setattr__(self, "i5g", int(self.i5g))
        if self.i5g == 0:
            if self.dl_mbps != 0:
                raise TraceFormatError("must be 0 when i5g = 0", field="dl_mbps")
            if self.ul_mbps != 0:
                raise TraceFormatError("must be 0 when i5g = 0", field="ul_mbps")
        if int(self.channel_number) != self.channel_number or self.channel_number < 0:
            raise TraceFormatError("must be an integer >= 0", field="channel_number")
        object.__setattr__(self, "channel_number", int(self.channel_number))
        if not isinstance(self.freq_profile_id, str) or not self.freq_profile_id:
            raise TraceFormatError("must be a nonempty string", field="freq_profile_id")
        if "," in self.freq_profile_id or "\n" in self.freq_profile_id:
            raise TraceFormatError("must not contain ',' or newlines", field="freq_profile_id")
        if self.power_mw is not None and self.power_mw < 0:
            raise TraceFormatError("must be >= 0", field="power_mw")

    @property
    def key(self):
        return (self.channel_number, self.freq_profile_id)


def _finite(name, value):
    try:
        value = float(value)
    except (TypeError, ValueError):
        raise TraceFormatError(f"not a number: {value!r}", field=name) from None
    if not math.isfinite(value):
        raise TraceFormatError("must be finite", field=name)
    return value


def _check_monotone_time(samples: Sequence[TraceSample], first_line=2):
    for i in range(1, len(samples)):
        if samples[i].t_s < samples[i - 1].t_s:
            raise TraceFormatError("timestamps must be nondecreasing",
                                   line=first_line + i, field="t_s")


def _parse_row(row, lineno):
    if len(row) != len(TRACE_HEADER):
        raise TraceFormatError(
            f"expected {len(TRACE_HEADER)} columns, got {len(row)}", line=lineno)
    values = dict(zip(TRACE_HEADER, row))
    kwargs = {}
    for name in TRACE_HEADER:
        cell = values[name].strip()
        if name == "freq_profile_id":
            kwargs[name] = cell
        elif name in _OPTIONAL_FIELDS:
            kwargs[name] = None if cell == "" else _parse_float(cell, name, lineno)
        elif name in ("i5g", "channel_number"):
            try:
                kwargs[name] = int(cell)
            except ValueError:
                raise TraceFormatError(f"not an integer: {cell!r}",
                                       line=lineno, field=name) from None
        else:
            kwargs[name] = _parse_float(cell, name, lineno)
    try:
        return TraceSample(**kwargs)
    except TraceFormatError as exc:
        exc.line = lineno
        exc.args = (f"line {lineno}, {exc.args[0]}",)
        raise


def _parse_float(cell, name, lineno):
    try:
        return float(cell)
    except ValueError:
        raise TraceFormatError(f"not a number: {cell!r}", line=lineno, field=name) from None


def load_traces(source) -> list:
    """Read a trace CSV from a path, a text stream or a byte stream.

    Raises TraceFormatError naming the offending line and field.
    """
    if isinstance(source, (str, os.PathLike)):
        with open(source, "rb") as fh:
            raw = fh.read()
    else:
        raw = source.read()
    if isinstance(raw, bytes):
        try:
            raw = raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise TraceFormatError(f"not UTF-8: {exc}") from exc

    rows = list(csv.reader(io.StringIO(raw, newline="")))
    if not rows:
        raise TraceFormatError("empty trace file")
    header = tuple(c.strip() for c in rows[0])
    if header != TRACE_HEADER:
        extra = [c for c in header if c not in TRACE_HEADER]
        missing = [c for c in TRACE_HEADER if c not in header]
        detail = []
        if extra:
            detail.append(f"unknown columns {extra}")
        if missing:
            detail.append(f"missing columns {missing}")
        if not detail:
            detail.append("columns out of order")
        raise TraceFormatError("bad header: " + "; ".join(detail), line=1)

    samples = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        samples.append(_parse_row(row, lineno))
    if not samples:
        raise TraceFormatError("trace has a header but no data rows")
    _check_monotone_time(samples)
    return samples


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return str(int(value))
    if isinstance(value, str):
        return value
    return repr(float(value))


def format_traces(samples: Sequence[TraceSample]) -> str:
    if not samples:
        raise TraceFormatError("refusing to write an empty trace")
    lines = [",".join(TRACE_HEADER)]
    for s in samples:
        lines.append(",".join(_fmt(getattr(s, name)) for name in TRACE_HEADER))
    return "\n".join(lines) + "\n"


def save_traces(samples: Sequence[TraceSample], sink) -> None:
    """Write samples in the canonical CSV form (LF endings, repr floats).

    ``sink`` is a path or a writable text stream.
    """
    text = format_traces(samples)
    if isinstance(sink, (str, os.PathLike)):
        Path(sink).write_text(text, encoding="utf-8", newline="\n")
    else:
        sink.write(text)


@dataclass(frozen=True)
class TrainingGridConfig:
    """Training grid: CPU load levels crossed with downlink settings.

    Each worker thread takes ``per_thread_usage_frac`` of total CPU capacity.
    Load fills cores in ``core_fill_order``, one core at a time, which is
    what yields the per-core CPU-6 and CPU-7 usages.

    ``ul_settings_mbps`` adds an uplink-only block (DL = 0) per thread count
    and ``include_5g_off`` adds one radio-off row per thread count; both are
    empty/off by default so the grid is |thread_counts| x |throughputs|.
    """

    thread_counts: tuple
    throughput_settings_mbps: tuple
    per_thread_usage_frac: float = 0.125
    dwell_s: float = 10.0
    freq_profile_id: str = "high"
    channel_number: int = 0
    n_cores: int = 8
    core_fill_order: tuple = (7, 6, 5, 4, 3, 2, 1, 0)
    ul_settings_mbps: tuple = ()
    include_5g_off: bool = False

    def validate(self):
        if not self.thread_counts:
            raise ConfigError("thread_counts must be nonempty")
        if any(int(n) != n or n < 0 for n in self.thread_counts):
            raise ConfigError("thread counts must be nonnegative integers")
        if not 0 < self.per_thread_usage_frac <= 1:
            raise ConfigError("per_thread_usage_frac must lie in (0, 1]")
        for n in self.thread_counts:
            if n * self.per_thread_usage_frac > 1 + 1e-12:
                raise ConfigError(
                    f"{n} threads x {self.per_thread_usage_frac} exceeds 100% CPU")
        if len(self.throughput_settings_mbps) < 1:
            raise ConfigError("need at least one throughput setting")
        if any(v < 0 for v in self.throughput_settings_mbps):
            raise ConfigError("throughput settings must be >= 0")
        if any(v < 0 for v in self.ul_settings_mbps):
            raise ConfigError("uplink settings must be >= 0")
        if self.dwell_s <= 0:
            raise ConfigError("dwell_s must be > 0")
        if sorted(self.core_fill_order) != list(range(self.n_cores)):
            raise ConfigError("core_fill_order must be a permutation of the cores")
        if not {6, 7} <= set(range(self.n_cores)):
            raise ConfigError("need at least 8 cores to report CPU 6 and CPU 7")


def core_usages(cfg: TrainingGridConfig, threads: int) -> list:
    """Per-core usage in percent for ``threads`` workers, indexed by core id."""
    load = threads * cfg.per_thread_usage_frac * cfg.n_cores  # in whole cores
    usage = [0.0] * cfg.n_cores
    for rank, core in enumerate(cfg.core_fill_order):
        usage[core] = 100.0 * min(1.0, max(0.0, load - rank))
    return usage


def generate_training_grid(cfg: TrainingGridConfig) -> list:
    cfg.validate()
    cells = []
    for n in cfg.thread_counts:
        for dl in cfg.throughput_settings_mbps:
            cells.append((n, 1, dl, 0.0))
    for n in cfg.thread_counts:
        for ul in cfg.ul_settings_mbps:
            cells.append((n, 1, 0.0, ul))
    if cfg.include_5g_off:
        for n in cfg.thread_counts:
            cells.append((n, 0, 0.0, 0.0))

    out = []
    for idx, (n, i5g, dl, ul) in enumerate(cells):
        cores = core_usages(cfg, n)
        out.append(TraceSample(
            t_s=idx * cfg.dwell_s,
            # rounding keeps 4 x 0.125 x 100 == 50.0 exactly
            ut_pct=round(n * cfg.per_thread_usage_frac * 100.0, 12),
            u6_pct=cores[6],
            u7_pct=cores[7],
            dl_mbps=dl,
            ul_mbps=ul,
            i5g=i5g,
            channel_number=cfg.channel_number,
            freq_profile_id=cfg.freq_profile_id,
        ))
    return out


def synth_traces(truth, grid: Sequence[TraceSample], noise_sigma_mw: float,
                 seed: int) -> list:
    """Fill ``power_mw`` with the truth model's prediction plus Gaussian noise."""
    from .power import predict_power

    if noise_sigma_mw < 0:
        raise ConfigError("noise_sigma_mw must be >= 0")
    for i, s in enumerate(grid):
        if s.key != truth.key:
            raise ModelError(f"sample {i} has key {s.key}, truth model is {truth.key}")
    rng = np.random.default_rng(seed)
    noise = rng.normal(0.0, noise_sigma_mw, size=len(grid)) if noise_sigma_mw > 0 \
        else np.zeros(len(grid))
    out = []
    for s, eps in zip(grid, noise):
        p = predict_power(truth, s) + float(eps)
        out.append(replace(s, power_mw=max(0.0, p)))
    return out


def sample_random_loads(n: int, key=(0, "high"), seed: int = 0,
                        radio_off_frac: float = 0.4, max_dl_mbps: float = 2000.0,
                        max_ul_mbps: float = 300.0) -> list:
    """Random operating points for fitting and validation runs.

    The first ``round(n * radio_off_frac)`` rows have the radio off. About
    30% of rows carry no CPU load and each per-core counter is idle in 40%
    of loaded rows, so intercepts and per-core terms stay identifiable.
    """
    if n < 1:
        raise ConfigError("n must be >= 1")
    if not 0 <= radio_off_frac <= 1:
        raise ConfigError("radio_off_frac must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    n_off = int(round(n * radio_off_frac))
    i5g = np.r_[np.zeros(n_off, dtype=int), np.ones(n - n_off, dtype=int)]
    loaded = rng.random(n) < 0.7
    ut = rng.uniform(0, 100, n) * loaded
    u6 = rng.uniform(0, 100, n) * loaded * (rng.random(n) < 0.6)
    u7 = rng.uniform(0, 100, n) * loaded * (rng.random(n) < 0.6)
    dl = rng.uniform(0, max_dl_mbps, n) * i5g
    ul = rng.uniform(0, max_ul_mbps, n) * i5g
    return [TraceSample(float(i), float(ut[i]), float(u6[i]), float(u7[i]),
                        float(dl[i]), float(ul[i]), int(i5g[i]), key[0], key[1])
            for i in range(n)]

"""Closed-loop throttling experiments.

The power model drives the transient thermal network; a skin-temperature
governor cuts the granted downlink rate multiplicatively when the skin node
reaches the threshold and adds it back in fixed steps once the skin has
cooled below ``threshold - hysteresis`` (AIMD). CPU load is never shed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError, ModelError
from .power import ModelRegistry, PowerModel, additivity_check, decompose_power
from .thermal import ThermalNetwork, TransientStepper, steady_state_temps
from .traces import TraceSample

SIM_HEADER = ("t_s", "offered_mbps", "granted_mbps", "power_mw", "skin_temp_c", "throttled")


@dataclass(frozen=True)
class WorkloadSegment:
    t_start_s: float
    dl_demand_mbps: float
    ul_demand_mbps: float = 0.0
    ut_pct: float = 0.0
    u6_pct: float = 0.0
    u7_pct: float = 0.0


@dataclass(frozen=True)
class Workload:
    segments: tuple
    duration_s: float

    def __post_init__(self):
        segs = tuple(sorted(self.segments, key=lambda s: s.t_start_s))
        object.__setattr__(self, "segments", segs)
        if not self.duration_s > 0:
            raise ConfigError("workload duration must be > 0")
        if not segs or segs[0].t_start_s != 0:
            raise ConfigError("workload segments must start at t = 0")
        for s in segs:
            if min(s.dl_demand_mbps, s.ul_demand_mbps, s.ut_pct, s.u6_pct, s.u7_pct) < 0:
                raise ConfigError("workload demands must be >= 0")
            if max(s.ut_pct, s.u6_pct, s.u7_pct) > 100:
                raise ConfigError("CPU usages must be <= 100")

    @classmethod
    def constant(cls, dl_demand_mbps, duration_s, **cpu):
        return cls((WorkloadSegment(0.0, dl_demand_mbps, **cpu),), duration_s)

    def at(self, t_s) -> WorkloadSegment:
        current = self.segments[0]
        for s in self.segments:
            if s.t_start_s <= t_s:
                current = s
            else:
                break
        return current


@dataclass(frozen=True)
class GovernorConfig:
    threshold_c: float
    hysteresis_c: float = 0.0
    control_period_s: float = 1.0
    backoff_factor: float = 0.995
    recovery_step_mbps: float = 2.0

    def __post_init__(self):
        if math.isnan(self.threshold_c):
            raise ConfigError("threshold_c must be a number")
        if self.hysteresis_c < 0:
            raise ConfigError("hysteresis_c must be >= 0")
        if not self.control_period_s > 0:
            raise ConfigError("control_period_s must be > 0")
        if not 0 < self.backoff_factor < 1:
            raise ConfigError("backoff_factor must lie in (0, 1)")
        if not self.recovery_step_mbps > 0:
            raise ConfigError("recovery_step_mbps must be > 0")


@dataclass(frozen=True)
class SimResult:
    t_s: np.ndarray
    offered_mbps: np.ndarray
    granted_mbps: np.ndarray
    power_mw: np.ndarray
    skin_temp_c: np.ndarray
    throttled: np.ndarray
    control_period_s: float
    throttle_events: int
    time_to_first_throttle_s: Optional[float]

    @property
    def peak_temp_c(self):
        return float(self.skin_temp_c.max())

    def summary(self, settle_fraction=0.5) -> dict:
        tail = self.t_s >= self.t_s[-1] * (1.0 - settle_fraction)
        return {
            "sustained_rate_mbps": sustained_rate(self, settle_fraction),
            "peak_temp_c": self.peak_temp_c,
            "settled_mean_skin_temp_c": float(self.skin_temp_c[tail].mean()),
            "throttle_events": self.throttle_events,
            "time_to_first_throttle_s": self.time_to_first_throttle_s,
        }


def _sample(model, seg, dl):
    # the radio stays connected for the whole run
    return TraceSample(0.0, seg.ut_pct, seg.u6_pct, seg.u7_pct, dl, seg.ul_demand_mbps,
                       1, model.channel_number, model.freq_profile_id)


def run_closed_loop(model: PowerModel, net: ThermalNetwork, gov: GovernorConfig,
                    wl: Workload, t_amb_c, dt_s, t0_temps=None) -> SimResult:
    if not dt_s > 0:
        raise ConfigError("dt_s must be > 0")
    if dt_s > gov.control_period_s:
        raise ConfigError("dt_s must not exceed the governor control period")
    n_steps = int(math.floor(wl.duration_s / dt_s + 1e-9))
    if n_steps < 1:
        raise ConfigError("workload is shorter than one integration step")
    # control instants fall on the step grid
    every = max(1, int(round(gov.control_period_s / dt_s)))

    stepper = TransientStepper(net, dt_s, t_amb_c, t0_temps)
    rows = np.zeros((n_steps, 6))
    granted = wl.at(0.0).dl_demand_mbps
    events = 0
    first = None
    for i in range(n_steps):
        t = i * dt_s
        seg = wl.at(t)
        offered = seg.dl_demand_mbps
        skin = stepper.skin_temp_c
        if i % every == 0:
            if skin >= gov.threshold_c:
                granted *= gov.backoff_factor
                events += 1
                if first is None:
                    first = t
            elif skin < gov.threshold_c - gov.hysteresis_c:
                granted = granted + gov.recovery_step_mbps
        granted = min(granted, offered)

        parts = decompose_power(model, _sample(model, seg, granted))
        rows[i] = (t, offered, granted, parts.total_mw, skin, granted < offered)
        inj = net.injections_for(parts)
        stepper.step(net.power_vector_w(inj))

    return SimResult(rows[:, 0], rows[:, 1], rows[:, 2], rows[:, 3], rows[:, 4],
                     rows[:, 5].astype(bool), gov.control_period_s, events, first)


def sustained_rate(result: SimResult, settle_fraction=0.5) -> float:
    """Mean granted rate over the trailing ``settle_fraction`` of the run."""
    if not 0 < settle_fraction < 1:
        raise ConfigError("settle_fraction must lie in (0, 1)")
    if len(result.t_s) < 2:
        raise ModelError("run too short")
    dt = result.t_s[1] - result.t_s[0]
    span = result.t_s[-1] + dt
    if span < 2 * result.control_period_s:
        raise ModelError("run shorter than two control periods")
    tail = result.t_s >= span * (1.0 - settle_fraction)
    return float(result.granted_mbps[tail].mean())


def format_sim(result: SimResult) -> str:
    lines = [",".join(SIM_HEADER)]
    for t, o, g, p, s, th in zip(result.t_s, result.offered_mbps, result.granted_mbps,
                                 result.power_mw, result.skin_temp_c, result.throttled):
        lines.append(f"{t:.6g},{o:.6g},{g:.6g},{p:.6g},{s:.6g},{int(th)}")
    return "\n".join(lines) + "\n"


def format_summary(summary: dict) -> str:
    lines = []
    for k, v in summary.items():
        if v is None:
            v = ""
        elif isinstance(v, float):
            v = f"{v:.6g}"
        lines.append(f"{k}={v}")
    return "\n".join(lines) + "\n"


def write_sim(result: SimResult, csv_path, summary_path=None, settle_fraction=0.5):
    Path(csv_path).write_text(format_sim(result), encoding="utf-8", newline="\n")
    if summary_path is not None:
        Path(summary_path).write_text(format_summary(result.summary(settle_fraction)),
                                      encoding="utf-8", newline="\n")


# -- stress scenarios ------------------------------------------------------------

STRESS_SCENARIOS = ("idle", "cpu_only", "transceiver_only", "both")


@dataclass(frozen=True)
class StressRow:
    freq_profile_id: str
    scenario: str
    power_mw: float
    skin_temp_c: float


@dataclass(frozen=True)
class StressMatrix:
    rows: tuple
    additivity_residual_mw: dict = field(default_factory=dict)

    def power(self, profile, scenario):
        for r in self.rows:
            if r.freq_profile_id == profile and r.scenario == scenario:
                return r.power_mw
        raise KeyError((profile, scenario))


def stress_samples(channel, profile, cpu_stress_pct=(100.0, 100.0, 100.0),
                   dl_stress_mbps=2000.0):
    ut, u6, u7 = cpu_stress_pct
    return {
        "idle": TraceSample(0, 0, 0, 0, 0, 0, 1, channel, profile),
        # CPU-only stress runs with the radio off
        "cpu_only": TraceSample(0, ut, u6, u7, 0, 0, 0, channel, profile),
        "transceiver_only": TraceSample(0, 0, 0, 0, dl_stress_mbps, 0, 1, channel, profile),
        "both": TraceSample(0, ut, u6, u7, dl_stress_mbps, 0, 1, channel, profile),
    }


def run_stress_matrix(registry: ModelRegistry, net: ThermalNetwork, t_amb_c,
                      channel=0, profiles=("high", "low"),
                      cpu_stress_pct=(100.0, 100.0, 100.0), dl_stress_mbps=2000.0):
    """Steady power and skin temperature for every stress case and profile."""
    rows = []
    residuals = {}
    for profile in profiles:
        model = registry.get(channel, profile)
        powers = {}
        for scenario, sample in stress_samples(channel, profile, cpu_stress_pct,
                                               dl_stress_mbps).items():
            parts = decompose_power(model, sample)
            temps = steady_state_temps(net, net.injections_for(parts), t_amb_c)
            rows.append(StressRow(profile, scenario, parts.total_mw, temps[net.skin_node]))
            powers[scenario] = parts.total_mw
        residuals[profile] = additivity_check(powers["cpu_only"], powers["transceiver_only"],
                                              powers["both"], model.bp_cpu_mw)
    return StressMatrix(tuple(rows), residuals)


def format_stress(matrix: StressMatrix) -> str:
    lines = ["freq_profile_id,scenario,power_mw,skin_temp_c"]
    for r in matrix.rows:
        lines.append(f"{r.freq_profile_id},{r.scenario},{r.power_mw:.6g},{r.skin_temp_c:.6g}")
    return "\n".join(lines) + "\n"

"""Ambient-temperature-aware power budget, sustainable rate and power reduction."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, ModelError
from .power import PowerModel
from .thermal import SteadyThermalModel

# Measured total power at a saturated 2 Gbps downlink with no uplink.
REFERENCE_POWER_MW = 5700.0
LINK_CAP_MBPS = 2000.0

CURVE_HEADER = ("ambient_temp_c", "p_max_mw", "max_rate_mbps", "pct_reduction", "feasible")


@dataclass(frozen=True)
class SustainabilityConfig:
    steady: SteadyThermalModel
    power_model: PowerModel
    reference_power_mw: float = REFERENCE_POWER_MW
    link_cap_mbps: float = LINK_CAP_MBPS
    # (ut_pct, u6_pct, u7_pct) assumed while streaming
    cpu_baseline: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if not self.reference_power_mw > 0:
            raise ConfigError("reference_power_mw must be > 0")
        if not self.link_cap_mbps > 0:
            raise ConfigError("link_cap_mbps must be > 0")
        if len(self.cpu_baseline) != 3 or any(not 0 <= u <= 100 for u in self.cpu_baseline):
            raise ConfigError("cpu_baseline must be three usages in [0, 100]")


@dataclass(frozen=True)
class CurveRow:
    ambient_temp_c: float
    p_max_mw: float
    max_rate_mbps: float
    pct_reduction: float
    feasible: bool


@dataclass(frozen=True)
class SustainabilityCurve:
    rows: tuple = field(default_factory=tuple)

    def column(self, name):
        return np.array([getattr(r, name) for r in self.rows], dtype=float)

    def feasible_rows(self):
        return [r for r in self.rows if r.feasible]


def max_acceptable_power(steady: SteadyThermalModel, t_amb_c) -> float:
    """Largest steady total power (mW) that keeps skin below the threshold."""
    if t_amb_c >= steady.throttle_threshold_c:
        raise ConfigError(f"ambient {t_amb_c} degC is at or above the throttle "
                          f"threshold {steady.throttle_threshold_c} degC")
    return (steady.throttle_threshold_c - t_amb_c) / steady.r4_c_per_mw


def _cpu_baseline_mw(cfg):
    m = cfg.power_model
    ut, u6, u7 = cfg.cpu_baseline
    return ut * m.c_ut_mw_per_pct + u6 * m.c_u6_mw_per_pct + u7 * m.c_u7_mw_per_pct


def rate_for_power(cfg: SustainabilityConfig, p_max_mw) -> float:
    """Invert the power model for downlink rate at the CPU baseline, UL = 0."""
    alpha = cfg.power_model.alpha_d_mw_per_mbps
    if not alpha > 0:
        raise ModelError(f"downlink coefficient {alpha} must be > 0 to invert for rate")
    headroom = p_max_mw - cfg.power_model.bp_5g_mw - _cpu_baseline_mw(cfg)
    return min(max(headroom / alpha, 0.0), cfg.link_cap_mbps)


def max_rate_without_throttling(cfg: SustainabilityConfig, t_amb_c) -> float:
    return rate_for_power(cfg, max_acceptable_power(cfg.steady, t_amb_c))


def percent_power_reduction(cfg: SustainabilityConfig, t_amb_c) -> float:
    p_max = max_acceptable_power(cfg.steady, t_amb_c)
    return min(100.0, max(0.0, 1.0 - p_max / cfg.reference_power_mw) * 100.0)


def sweep(cfg: SustainabilityConfig, t_amb_range, step_c) -> SustainabilityCurve:
    """Evaluate the curve on ``lo, lo + step, ...`` up to ``hi`` inclusive.

    Ambient temperatures at or above the threshold give rows with
    ``feasible=False`` (zero budget, zero rate, 100% reduction).
    """
    lo, hi = t_amb_range
    if not step_c > 0:
        raise ConfigError("step_c must be > 0")
    if hi < lo:
        raise ConfigError("empty ambient range")
    n = int(math.floor((hi - lo) / step_c + 1e-9)) + 1
    rows = []
    for k in range(n):
        t = lo + k * step_c
        if t >= cfg.steady.throttle_threshold_c:
            rows.append(CurveRow(t, 0.0, 0.0, 100.0, False))
            continue
        p_max = max_acceptable_power(cfg.steady, t)
        rows.append(CurveRow(t, p_max, rate_for_power(cfg, p_max),
                             percent_power_reduction(cfg, t), True))
    curve = SustainabilityCurve(tuple(rows))
    check_curve(curve)
    return curve


def check_curve(curve: SustainabilityCurve) -> None:
    ok = curve.feasible_rows()
    for prev, cur in zip(ok, ok[1:]):
        if not cur.p_max_mw < prev.p_max_mw:
            raise ModelError(f"p_max not decreasing at {cur.ambient_temp_c} degC")
        if cur.pct_reduction < prev.pct_reduction:
            raise ModelError(f"pct_reduction decreases at {cur.ambient_temp_c} degC")
        if cur.max_rate_mbps > prev.max_rate_mbps:
            raise ModelError(f"max_rate increases at {cur.ambient_temp_c} degC")
    for r in curve.rows:
        if not 0.0 <= r.pct_reduction <= 100.0:
            raise ModelError(f"pct_reduction out of range at {r.ambient_temp_c} degC")


def format_curve(curve: SustainabilityCurve) -> str:
    lines = [",".join(CURVE_HEADER)]
    for r in curve.rows:
        lines.append(f"{r.ambient_temp_c:.6g},{r.p_max_mw:.6g},{r.max_rate_mbps:.6g},"
                     f"{r.pct_reduction:.6g},{int(r.feasible)}")
    return "\n".join(lines) + "\n"


def write_curve_csv(curve: SustainabilityCurve, path) -> None:
    Path(path).write_text(format_curve(curve), encoding="utf-8", newline="\n")

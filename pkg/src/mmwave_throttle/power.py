"""System-level UE power model.

Total power for one (channel number, CPU frequency profile) pair::

    P = (1 - i5g) * bp_cpu + i5g * bp_5g
        + ut * c_ut + u6 * c_u6 + u7 * c_u7
        + dl * alpha_d + ul * alpha_u

in mW, with CPU usage in percent and throughput in Mbps. The two base-power
terms are fitted as indicator columns of the design matrix.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import ModelError, RankDeficientError, TraceFormatError
from .estimation import DesignMatrix, FitReport, fit_report, least_squares

COEFFICIENT_FIELDS = (
    "bp_cpu_mw", "bp_5g_mw", "c_ut_mw_per_pct", "c_u6_mw_per_pct",
    "c_u7_mw_per_pct", "alpha_d_mw_per_mbps", "alpha_u_mw_per_mbps",
)
_SLOPE_FIELDS = COEFFICIENT_FIELDS[2:]
REGISTRY_VERSION = 1


@dataclass(frozen=True)
class PowerModel:
    channel_number: int
    freq_profile_id: str
    bp_cpu_mw: float
    bp_5g_mw: float
    c_ut_mw_per_pct: float = 0.0
    c_u6_mw_per_pct: float = 0.0
    c_u7_mw_per_pct: float = 0.0
    alpha_d_mw_per_mbps: float = 0.0
    alpha_u_mw_per_mbps: float = 0.0
    plausibility_flags: tuple = ()

    def __post_init__(self):
        for name in COEFFICIENT_FIELDS:
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise ModelError(f"{name} must be finite")
            object.__setattr__(self, name, value)
        object.__setattr__(self, "plausibility_flags", tuple(self.plausibility_flags))

    @property
    def key(self):
        return (self.channel_number, self.freq_profile_id)

    def coefficients(self) -> np.ndarray:
        return np.array([getattr(self, f) for f in COEFFICIENT_FIELDS])


@dataclass(frozen=True)
class PowerBreakdown:
    base_mw: float
    cpu_mw: float
    transceiver_mw: float
    total_mw: float


def _check_key(model, sample):
    if sample.key != model.key:
        raise ModelError(f"sample key {sample.key} does not match model key {model.key}")


def decompose_power(model: PowerModel, sample) -> PowerBreakdown:
    _check_key(model, sample)
    base = model.bp_5g_mw if sample.i5g else model.bp_cpu_mw
    cpu = (sample.ut_pct * model.c_ut_mw_per_pct
           + sample.u6_pct * model.c_u6_mw_per_pct
           + sample.u7_pct * model.c_u7_mw_per_pct)
    trans = (sample.dl_mbps * model.alpha_d_mw_per_mbps
             + sample.ul_mbps * model.alpha_u_mw_per_mbps)
    return PowerBreakdown(base, cpu, trans, base + cpu + trans)


def predict_power(model: PowerModel, sample) -> float:
    # routed through decompose_power so the breakdown always sums exactly
    return decompose_power(model, sample).total_mw


def design_matrix(samples: Sequence) -> DesignMatrix:
    rows = [(1 - s.i5g, s.i5g, s.ut_pct, s.u6_pct, s.u7_pct, s.dl_mbps, s.ul_mbps)
            for s in samples]
    return DesignMatrix(np.array(rows, dtype=float).reshape(-1, 7), COEFFICIENT_FIELDS)


def predict_batch(model: PowerModel, samples: Sequence) -> np.ndarray:
    """Matrix form of :func:`predict_power` over a list of samples."""
    for s in samples:
        _check_key(model, s)
    return design_matrix(samples).values @ model.coefficients()


def fit_power_model(samples: Sequence, key=None, fixed_bp_cpu_mw: Optional[float] = None):
    """Fit all coefficients by least squares; returns ``(model, FitReport)``.

    ``fixed_bp_cpu_mw`` pins the radio-off base power, which is required
    when every sample has i5g = 1 and the intercept is unidentifiable.
    """
    samples = list(samples)
    if not samples:
        raise ModelError("no samples to fit")
    if key is None:
        key = samples[0].key
    keys = {s.key for s in samples}
    if keys != {key}:
        raise ModelError(f"mixed model keys in training data: {sorted(keys)}; "
                         f"expected only {key}")
    missing = [i for i, s in enumerate(samples) if s.power_mw is None]
    if missing:
        raise ModelError(f"{len(missing)} samples lack power_mw (first index {missing[0]})")

    X = design_matrix(samples).values
    y = np.array([s.power_mw for s in samples])
    labels = list(COEFFICIENT_FIELDS)
    if fixed_bp_cpu_mw is not None:
        if fixed_bp_cpu_mw < 0:
            raise ModelError("fixed_bp_cpu_mw must be >= 0")
        y = y - X[:, 0] * fixed_bp_cpu_mw
        X = X[:, 1:]
        labels = labels[1:]
    if len(samples) < len(labels):
        raise ModelError(f"underdetermined: {len(samples)} samples for "
                         f"{len(labels)} coefficients")

    try:
        sol = least_squares(DesignMatrix(X, labels), y)
    except RankDeficientError as exc:
        hints = []
        if "bp_cpu_mw" in exc.columns:
            hints.append("bp_cpu_mw is unidentifiable without i5g = 0 samples; "
                         "pass fixed_bp_cpu_mw")
        if "bp_5g_mw" in exc.columns:
            hints.append("bp_5g_mw is unidentifiable without i5g = 1 samples")
        msg = "; ".join(hints + [str(exc)])
        raise RankDeficientError(msg, columns=exc.columns) from None

    coef = dict(zip(labels, sol.coefficients.tolist()))
    if fixed_bp_cpu_mw is not None:
        coef["bp_cpu_mw"] = float(fixed_bp_cpu_mw)
    for name in ("bp_cpu_mw", "bp_5g_mw"):
        if coef[name] < 0:
            raise ModelError(f"fitted {name} = {coef[name]:.6g} mW is negative")
    flags = tuple(f"negative {name} = {coef[name]:.6g}"
                  for name in _SLOPE_FIELDS if coef[name] < 0)

    model = PowerModel(key[0], key[1], plausibility_flags=flags, **coef)
    report = fit_report(predict_batch(model, samples), [s.power_mw for s in samples])
    return model, report


def additivity_check(p_cpu_only_mw, p_trans_only_mw, p_both_mw, bp_cpu_mw) -> float:
    """(cpu-only + transceiver-only) - (both + radio-off base power).

    Near zero when the CPU adds little on top of a saturated transceiver.
    """
    for name, v in (("p_cpu_only_mw", p_cpu_only_mw), ("p_trans_only_mw", p_trans_only_mw),
                    ("p_both_mw", p_both_mw), ("bp_cpu_mw", bp_cpu_mw)):
        if v < 0:
            raise ModelError(f"{name} must be >= 0")
    return (p_cpu_only_mw + p_trans_only_mw) - (p_both_mw + bp_cpu_mw)


@dataclass
class ModelRegistry:
    models: dict = field(default_factory=dict)
    version: int = REGISTRY_VERSION

    def add(self, model: PowerModel, replace=False):
        if model.key in self.models and not replace:
            raise ModelError(f"registry already has a model for {model.key}")
        self.models[model.key] = model

    def get(self, channel_number, freq_profile_id) -> PowerModel:
        try:
            return self.models[(channel_number, freq_profile_id)]
        except KeyError:
            known = ", ".join(f"{c}/{p}" for c, p in sorted(self.models)) or "none"
            raise ModelError(f"no model for channel {channel_number}, profile "
                             f"{freq_profile_id!r} (registry has: {known})") from None

    def __len__(self):
        return len(self.models)


def registry_to_json(reg: ModelRegistry) -> str:
    entries = []
    for key in sorted(reg.models):
        d = asdict(reg.models[key])
        d["plausibility_flags"] = list(d["plausibility_flags"])
        entries.append(d)
    return json.dumps({"version": reg.version, "models": entries}, indent=2) + "\n"


def save_registry(reg: ModelRegistry, sink) -> None:
    text = registry_to_json(reg)
    if isinstance(sink, (str, os.PathLike)):
        Path(sink).write_text(text, encoding="utf-8", newline="\n")
    else:
        sink.write(text)


def load_registry(source) -> ModelRegistry:
    if isinstance(source, (str, os.PathLike)):
        text = Path(source).read_text(encoding="utf-8")
    else:
        text = source.read()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise TraceFormatError(f"registry is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or "models" not in doc:
        raise TraceFormatError("registry must be an object with 'version' and 'models'")
    if doc.get("version") != REGISTRY_VERSION:
        raise ModelError(f"registry version {doc.get('version')!r} is not supported "
                         f"(expected {REGISTRY_VERSION})")
    reg = ModelRegistry()
    for entry in doc["models"]:
        try:
            model = PowerModel(**entry)
        except TypeError as exc:
            raise TraceFormatError(f"bad registry entry: {exc}") from exc
        if model.key in reg.models:
            raise ModelError(f"duplicate registry entry for {model.key}")
        reg.add(model)
    return reg


def synthetic_truth(channel_number=0, freq_profile_id="high") -> PowerModel:
    """Plausible ground-truth coefficients for synthetic experiments.

    Both profiles share transceiver terms. Saturating the downlink at
    2000 Mbps costs 1500 + 2.1 * 2000 = 5700 mW, and full CPU load with the
    radio off costs 3700 mW ("high") or 1250 mW ("low"), in line with the
    Pixel 5 stress measurements.
    """
    if freq_profile_id == "low":
        cpu = dict(c_ut_mw_per_pct=4.5, c_u6_mw_per_pct=1.2, c_u7_mw_per_pct=1.8)
    else:
        cpu = dict(c_ut_mw_per_pct=20.0, c_u6_mw_per_pct=5.0, c_u7_mw_per_pct=7.0)
    return PowerModel(channel_number, freq_profile_id, bp_cpu_mw=500.0, bp_5g_mw=1500.0,
                      alpha_d_mw_per_mbps=2.1, alpha_u_mw_per_mbps=5.0, **cpu)

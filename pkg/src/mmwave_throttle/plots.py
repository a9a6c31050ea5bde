"""Figure rendering for CLI reports.

Figures are derived views of numbers already written to CSV; nothing here
feeds back into the analysis. SVGs are written with a fixed hash salt and no
date metadata so repeated runs produce identical files.
"""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_RC = {
    "svg.hashsalt": "mmwave-throttle",
    "font.size": 10,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "figure.figsize": (5.5, 3.6),
}


def _save(fig, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fmt = path.suffix.lstrip(".") or "svg"
    metadata = {"Date": None} if fmt == "svg" else None
    fig.tight_layout()
    fig.savefig(path, format=fmt, metadata=metadata)
    plt.close(fig)
    return path


def plot_r4_fit(samples, r4_c_per_mw, path):
    """Temperature rise against total power with the through-origin fit."""
    with plt.rc_context(_RC):
        fig, ax = plt.subplots()
        p = np.array([s.total_power_mw for s in samples])
        rise = np.array([s.skin_temp_c - s.ambient_temp_c for s in samples])
        ax.scatter(p, rise, s=12, alpha=0.7, label="steady samples")
        xs = np.linspace(0, p.max() * 1.05, 50)
        ax.plot(xs, r4_c_per_mw * xs, color="C3",
                label=f"fit: R4 = {r4_c_per_mw:.6g} degC/mW")
        ax.set_xlabel("total power (mW)")
        ax.set_ylabel("skin - ambient (degC)")
        ax.legend(loc="upper left")
        return _save(fig, path)


def plot_curve(curve, out_dir, stem="sustain"):
    """One figure per curve column: power budget, rate, reduction."""
    rows = curve.feasible_rows()
    t = np.array([r.ambient_temp_c for r in rows])
    panels = (
        ("p_max_mw", "maximum acceptable power (mW)", "p_max"),
        ("max_rate_mbps", "maximum non-throttling rate (Mbps)", "max_rate"),
        ("pct_reduction", "required power reduction (%)", "pct_reduction"),
    )
    paths = []
    for attr, ylabel, suffix in panels:
        with plt.rc_context(_RC):
            fig, ax = plt.subplots()
            ax.plot(t, [getattr(r, attr) for r in rows], marker="o", ms=3)
            ax.set_xlabel("ambient temperature (degC)")
            ax.set_ylabel(ylabel)
            paths.append(_save(fig, Path(out_dir) / f"{stem}_{suffix}.svg"))
    return paths


def plot_sim(result, threshold_c, path):
    with plt.rc_context(_RC):
        fig, (ax1, ax2) = plt.subplots(2, 1, sharex=True, figsize=(6, 5))
        ax1.plot(result.t_s, result.offered_mbps, lw=1, ls="--", label="offered")
        ax1.plot(result.t_s, result.granted_mbps, lw=1, label="granted")
        ax1.set_ylabel("downlink (Mbps)")
        ax1.legend(loc="upper right")
        ax2.plot(result.t_s, result.skin_temp_c, lw=1, color="C3")
        if np.isfinite(threshold_c):
            ax2.axhline(threshold_c, color="k", lw=0.8, ls=":")
        ax2.set_xlabel("time (s)")
        ax2.set_ylabel("skin temperature (degC)")
        return _save(fig, path)

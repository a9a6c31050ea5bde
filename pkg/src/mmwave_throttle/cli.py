"""Command-line front end.

Exit codes: 0 success, 2 I/O or malformed input file, 3 model/fit failure,
4 bad configuration or arguments. Machine-readable numbers are printed with
6 significant digits, except trace and registry files, which keep full
double precision so they reload losslessly.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigError, ModelError, TraceFormatError
from .power import (ModelRegistry, fit_power_model, load_registry, predict_batch,
                    save_registry, synthetic_truth)
from .sim import (GovernorConfig, Workload, WorkloadSegment, format_stress, run_closed_loop,
                  run_stress_matrix, write_sim)
from .estimation import fit_report
from .sustainability import (LINK_CAP_MBPS, REFERENCE_POWER_MW, SustainabilityConfig, sweep,
                             write_curve_csv)
from .thermal import (SteadyThermalModel, default_network, estimate_r4, load_network,
                      steady_samples_from_traces)
from .traces import (TrainingGridConfig, generate_training_grid, load_traces,
                     sample_random_loads, save_traces, synth_traces)

EXIT_OK, EXIT_IO, EXIT_MODEL, EXIT_CONFIG = 0, 2, 3, 4


def _g(x):
    """6-significant-digit rendering used for every machine-readable number."""
    return float(f"{x:.6g}")


def _floats(text):
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _ints(text):
    try:
        return tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _require_file(path, what):
    if path is None:
        raise ConfigError(f"--{what} is required")
    if not Path(path).is_file():
        raise FileNotFoundError(f"{what} file not found: {path}")


def _write_json(path, doc):
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n",
                          encoding="utf-8", newline="\n")


def _registry_or_default(args, profiles):
    if args.registry:
        _require_file(args.registry, "registry")
        return load_registry(args.registry)
    reg = ModelRegistry()
    for p in profiles:
        reg.add(synthetic_truth(args.channel, p))
    print("note: no --registry given, using the built-in synthetic model", file=sys.stderr)
    return reg


def _network(args):
    if getattr(args, "network", None):
        _require_file(args.network, "network")
        return load_network(args.network)
    return default_network(r4_c_per_mw=args.r4)


def _key_from(samples, args):
    if args.freq_profile is not None:
        return (args.channel, args.freq_profile)
    keys = sorted({s.key for s in samples})
    if len(keys) != 1:
        raise ModelError(f"trace mixes model keys {keys}; pass --channel and --freq-profile")
    return keys[0]


# -- subcommands ---------------------------------------------------------------

def cmd_gen_traces(args):
    profile = args.freq_profile or "high"
    if args.truth:
        _require_file(args.truth, "truth")
        truth = load_registry(args.truth).get(args.channel, profile)
    else:
        truth = synthetic_truth(args.channel, profile)
    if args.design == "grid":
        cfg = TrainingGridConfig(
            thread_counts=args.threads,
            throughput_settings_mbps=args.dl,
            per_thread_usage_frac=args.per_thread_frac,
            dwell_s=args.dwell,
            freq_profile_id=profile,
            channel_number=args.channel,
            ul_settings_mbps=args.ul,
            include_5g_off=not args.no_radio_off,
        )
        grid = generate_training_grid(cfg)
    else:
        grid = sample_random_loads(args.n, key=(args.channel, profile), seed=args.seed)
    samples = synth_traces(truth, grid, args.noise_sigma, args.seed)
    if args.ambient_c:
        samples = _attach_temperatures(samples, args)
    save_traces(samples, args.out)
    print(f"wrote {len(samples)} samples to {args.out}")
    return EXIT_OK


def _attach_temperatures(samples, args):
    from dataclasses import replace
    rng = np.random.default_rng(args.seed + 1)
    noise = rng.normal(0.0, args.temp_noise_c, len(samples)) if args.temp_noise_c > 0 \
        else np.zeros(len(samples))
    out = []
    for i, s in enumerate(samples):
        amb = args.ambient_c[i % len(args.ambient_c)]
        skin = amb + args.r4 * s.power_mw + float(noise[i])
        out.append(replace(s, ambient_temp_c=amb, skin_temp_c=skin))
    return out


def cmd_fit_power(args):
    _require_file(args.in_, "in")
    if args.registry is None:
        raise ConfigError("--registry is required")
    samples = load_traces(args.in_)
    key = _key_from(samples, args)
    if args.freq_profile is not None:
        samples = [s for s in samples if s.key == key]
        if not samples:
            raise ModelError(f"no samples for key {key}")
    model, report = fit_power_model(samples, key, fixed_bp_cpu_mw=args.fixed_bp_cpu)
    reg = load_registry(args.registry) if Path(args.registry).exists() else ModelRegistry()
    reg.add(model, replace=True)
    save_registry(reg, args.registry)

    print(f"model channel={key[0]} profile={key[1]}")
    for name in ("bp_cpu_mw", "bp_5g_mw", "c_ut_mw_per_pct", "c_u6_mw_per_pct",
                 "c_u7_mw_per_pct", "alpha_d_mw_per_mbps", "alpha_u_mw_per_mbps"):
        print(f"  {name:<22s} {getattr(model, name):.6g}")
    for flag in model.plausibility_flags:
        print(f"  warning: {flag}")
    _print_metrics(report, "training")
    if args.report:
        _write_json(args.report, _report_doc(report, key))
    return EXIT_OK


def _report_doc(report, key):
    return {
        "channel_number": key[0],
        "freq_profile_id": key[1],
        "n_samples": report.n_samples,
        "pearson_rho": _g(report.pearson_rho),
        "rmse_mw": _g(report.rmse_mw),
        "accuracy": _g(report.mean_accuracy),
    }


def _print_metrics(report, label):
    print(f"{'Evaluation Metric':<20s}{label.capitalize() + ' Results':>20s}")
    print(f"{'rho':<20s}{report.pearson_rho:>20.3f}")
    print(f"{'RMSE':<20s}{report.rmse_mw:>20.2f}")
    print(f"{'Accuracy':<20s}{report.mean_accuracy:>20.3f}")
    print(f"{'n':<20s}{report.n_samples:>20d}")


def cmd_eval_power(args):
    _require_file(args.in_, "in")
    _require_file(args.registry, "registry")
    samples = load_traces(args.in_)
    key = _key_from(samples, args)
    model = load_registry(args.registry).get(*key)
    samples = [s for s in samples if s.key == key]
    if any(s.power_mw is None for s in samples):
        raise ModelError("evaluation trace rows must all carry power_mw")
    predicted = predict_batch(model, samples)
    measured = np.array([s.power_mw for s in samples])
    report = fit_report(predicted, measured)
    _print_metrics(report, "validation")
    if args.out:
        lines = ["t_s,measured_mw,predicted_mw,residual_mw"]
        for s, p in zip(samples, predicted):
            lines.append(f"{s.t_s:.6g},{s.power_mw:.6g},{p:.6g},{p - s.power_mw:.6g}")
        Path(args.out).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")
    if args.report:
        _write_json(args.report, _report_doc(report, key))
    return EXIT_OK


def cmd_fit_thermal(args):
    _require_file(args.in_, "in")
    steady = steady_samples_from_traces(load_traces(args.in_))
    if not steady:
        raise ModelError("no rows with power, skin and ambient temperature")
    fit = estimate_r4(steady)
    print(f"R4 = {fit.r4_c_per_mw:.6f} degC/mW")
    print(f"residual RMSE = {fit.rmse_c:.6g} degC over {fit.n_samples} samples")
    if args.out:
        doc = {"r4_c_per_mw": _g(fit.r4_c_per_mw), "rmse_c": _g(fit.rmse_c),
               "n_samples": fit.n_samples}
        if args.threshold_c is not None:
            doc["throttle_threshold_c"] = args.threshold_c
        _write_json(args.out, doc)
    if args.svg:
        from .plots import plot_r4_fit
        plot_r4_fit(steady, fit.r4_c_per_mw, Path(args.svg) / "r4_fit.svg")
    return EXIT_OK


def _steady_model(args):
    r4 = args.r4
    threshold = args.threshold_c
    if getattr(args, "thermal", None):
        _require_file(args.thermal, "thermal")
        try:
            doc = json.loads(Path(args.thermal).read_text(encoding="utf-8"))
            r4 = float(doc["r4_c_per_mw"])
        except (ValueError, KeyError, TypeError) as exc:
            raise TraceFormatError(f"{args.thermal}: not a thermal fit document ({exc!r})") \
                from exc
        if threshold is None:
            threshold = doc.get("throttle_threshold_c")
    if threshold is None:
        raise ConfigError("--threshold-c is required")
    return SteadyThermalModel(r4, threshold)


def cmd_sustain(args):
    steady = _steady_model(args)
    profile = args.freq_profile or "high"
    model = _registry_or_default(args, [profile]).get(args.channel, profile)
    cfg = SustainabilityConfig(steady, model, args.reference_mw, args.link_cap,
                               args.cpu_baseline)
    curve = sweep(cfg, (args.from_c, args.to_c), args.step_c)
    write_curve_csv(curve, args.out)
    print(f"wrote {len(curve.rows)} rows to {args.out}")
    if args.svg:
        from .plots import plot_curve
        for p in plot_curve(curve, args.svg):
            print(f"wrote {p}")
    return EXIT_OK


def cmd_simulate(args):
    if args.threshold_c is None:
        raise ConfigError("--threshold-c is required")
    profile = args.freq_profile or "high"
    model = _registry_or_default(args, [profile]).get(args.channel, profile)
    net = _network(args)
    gov = GovernorConfig(args.threshold_c, args.hysteresis_c, args.control_period,
                         args.backoff, args.recovery_step)
    ut, u6, u7 = args.cpu_load
    wl = Workload((WorkloadSegment(0.0, args.demand_mbps, 0.0, ut, u6, u7),), args.duration)
    result = run_closed_loop(model, net, gov, wl, args.ambient_c, args.dt)
    summary_path = args.out + ".summary"
    write_sim(result, args.out, summary_path, args.settle_fraction)
    summary = result.summary(args.settle_fraction)
    for k, v in summary.items():
        print(f"{k} = {'' if v is None else (f'{v:.6g}' if isinstance(v, float) else v)}")
    if args.svg:
        from .plots import plot_sim
        plot_sim(result, args.threshold_c, Path(args.svg) / "simulate.svg")
    return EXIT_OK


def cmd_stress_matrix(args):
    profiles = tuple(args.profiles.split(","))
    reg = _registry_or_default(args, profiles)
    net = _network(args)
    matrix = run_stress_matrix(reg, net, args.ambient_c, args.channel, profiles,
                               dl_stress_mbps=args.dl_stress)
    text = format_stress(matrix)
    sys.stdout.write(text)
    for p, r in matrix.additivity_residual_mw.items():
        print(f"additivity residual [{p}] = {r:.6g} mW")
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8", newline="\n")
    return EXIT_OK


# -- parser ----------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser():
    p = _Parser(prog="mmwave-throttle",
                description="Power/thermal modeling of mmWave UE throttling.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, key=True):
        sp.add_argument("--seed", type=int, default=0)
        if key:
            sp.add_argument("--channel", type=int, default=0)
            sp.add_argument("--freq-profile", default=None)

    sp = sub.add_parser("gen-traces", help="write a synthetic training trace")
    common(sp)
    sp.add_argument("--out", required=True)
    sp.add_argument("--truth", help="registry holding the ground-truth model")
    sp.add_argument("--design", choices=("grid", "random"), default="grid")
    sp.add_argument("--threads", type=_ints, default=(0, 1, 2, 4, 8))
    sp.add_argument("--dl", type=_floats,
                    default=tuple(float(v) for v in np.linspace(0, 2000, 16)))
    sp.add_argument("--ul", type=_floats, default=(25.0, 50.0, 100.0, 150.0))
    sp.add_argument("--per-thread-frac", type=float, default=0.125)
    sp.add_argument("--dwell", type=float, default=10.0)
    sp.add_argument("--no-radio-off", action="store_true",
                    help="omit the radio-off rows (then fit with --fixed-bp-cpu)")
    sp.add_argument("--n", type=int, default=300, help="rows for --design random")
    sp.add_argument("--noise-sigma", type=float, default=0.0, help="power noise, mW")
    sp.add_argument("--ambient-c", type=_floats, default=None,
                    help="attach steady temperatures cycling through these ambients")
    sp.add_argument("--r4", type=float, default=0.005, help="degC/mW for --ambient-c")
    sp.add_argument("--temp-noise-c", type=float, default=0.0)
    sp.set_defaults(func=cmd_gen_traces)

    sp = sub.add_parser("fit-power", help="fit the power model to a trace")
    common(sp)
    sp.add_argument("--in", dest="in_", required=True)
    sp.add_argument("--registry", required=True)
    sp.add_argument("--fixed-bp-cpu", type=float, default=None)
    sp.add_argument("--report", help="write fit metrics as JSON")
    sp.set_defaults(func=cmd_fit_power)

    sp = sub.add_parser("eval-power", help="evaluate a fitted model on a trace")
    common(sp)
    sp.add_argument("--in", dest="in_", required=True)
    sp.add_argument("--registry", required=True)
    sp.add_argument("--out", help="per-sample predictions CSV")
    sp.add_argument("--report", help="write metrics as JSON")
    sp.set_defaults(func=cmd_eval_power)

    sp = sub.add_parser("fit-thermal", help="estimate skin-to-ambient resistance R4")
    common(sp, key=False)
    sp.add_argument("--in", dest="in_", required=True)
    sp.add_argument("--out", help="write the fit as JSON")
    sp.add_argument("--threshold-c", type=float, default=None)
    sp.add_argument("--svg", help="directory for the regression figure")
    sp.set_defaults(func=cmd_fit_thermal)

    sp = sub.add_parser("sustain", help="sweep power budget, rate and reduction")
    common(sp)
    sp.add_argument("--registry")
    sp.add_argument("--thermal", help="JSON written by fit-thermal")
    sp.add_argument("--r4", type=float, default=0.005, help="degC/mW")
    sp.add_argument("--threshold-c", type=float, default=None)
    sp.add_argument("--from", dest="from_c", type=float, default=15.0)
    sp.add_argument("--to", dest="to_c", type=float, default=39.0)
    sp.add_argument("--step", dest="step_c", type=float, default=1.0)
    sp.add_argument("--reference-mw", type=float, default=REFERENCE_POWER_MW)
    sp.add_argument("--link-cap", type=float, default=LINK_CAP_MBPS)
    sp.add_argument("--cpu-baseline", type=_floats, default=(0.0, 0.0, 0.0),
                    help="ut,u6,u7 percent assumed while streaming")
    sp.add_argument("--out", required=True)
    sp.add_argument("--svg", help="directory for the three curve figures")
    sp.set_defaults(func=cmd_sustain)

    sp = sub.add_parser("simulate", help="closed-loop throttling simulation")
    common(sp)
    sp.add_argument("--registry")
    sp.add_argument("--network", help="thermal network JSON (default topology otherwise)")
    sp.add_argument("--r4", type=float, default=0.005, help="degC/mW for the default network")
    sp.add_argument("--threshold-c", type=float, default=None)
    sp.add_argument("--ambient-c", type=float, default=25.0)
    sp.add_argument("--demand-mbps", type=float, default=LINK_CAP_MBPS)
    sp.add_argument("--cpu-load", type=_floats, default=(0.0, 0.0, 0.0),
                    help="ut,u6,u7 percent")
    sp.add_argument("--duration", type=float, default=3000.0)
    sp.add_argument("--dt", type=float, default=0.5)
    sp.add_argument("--control-period", type=float, default=1.0)
    sp.add_argument("--backoff", type=float, default=0.995)
    sp.add_argument("--recovery-step", type=float, default=2.0)
    sp.add_argument("--hysteresis-c", type=float, default=0.0)
    sp.add_argument("--settle-fraction", type=float, default=0.5)
    sp.add_argument("--out", required=True)
    sp.add_argument("--svg", help="directory for the time-series figure")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("stress-matrix", help="CPU/transceiver stress cases per profile")
    common(sp)
    sp.add_argument("--registry")
    sp.add_argument("--network")
    sp.add_argument("--r4", type=float, default=0.005)
    sp.add_argument("--ambient-c", type=float, default=25.0)
    sp.add_argument("--profiles", default="high,low")
    sp.add_argument("--dl-stress", type=float, default=LINK_CAP_MBPS)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_stress_matrix)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except TraceFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ModelError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MODEL
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())

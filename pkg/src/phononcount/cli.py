"""``phononcount`` command-line front end.

Every subcommand reads the INI config (bundled reference setup by default),
applies flag overrides, writes its tables into ``--out`` (default
``$PHONONCOUNT_OUT`` or the working directory) and records a
``<command>.manifest.json`` with the sha256 of every file read or written.

Exit codes: 0 success, 2 invalid input, 3 numerical failure, 4 I/O error.
"""

import argparse
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import io
from .clicks import (
    detected_sideband_rates,
    simulate_sideband_stream,
    simulate_two_sideband_experiment,
)
from .correlation import (
    build_histogram,
    diluted_contrast,
    fit_g2,
    normalize_g2,
    pilot_bin_width,
)
from .exceptions import NumericalError, ValidationError
from .filters import (
    FilterChain,
    chain_transmission,
    group_delay,
    predict_count_rate,
    rejection_db,
)
from .lock import LockPhase, frozen_ensemble, run_duty_cycle
from .params import OptomechanicalConfig, hz, to_hz
from .rates import drive_for_gamma_opt
from .thermometry import thermometry_from_streams

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_IO = 0, 2, 3, 4


# ------------------------------------------------------------------ helpers


def _grid(lo, hi, n, log):
    if n < 0:
        raise ValidationError("--n-points must be >= 0")
    if n == 0:
        return np.empty(0)
    if n == 1:
        return np.array([lo])
    if log:
        if lo <= 0 or hi <= 0:
            raise ValidationError("log grid needs positive end points")
        return np.geomspace(lo, hi, n)
    return np.linspace(lo, hi, n)


def _overrides(args):
    ov = {
        "cavity.detuning_hz": getattr(args, "detuning_hz", None),
        "drive.gamma_opt_hz": getattr(args, "gamma_opt_hz", None),
        "filter.linewidth_hz": getattr(args, "filter_linewidth_hz", None),
        "detection.dark_rate_hz": getattr(args, "dark_rate_hz", None),
    }
    return {k: v for k, v in ov.items() if v is not None}


def _out_dir(args):
    out = args.out or os.environ.get(io.OUTPUT_ENV) or "."
    return Path(out)


class _Run:
    """Collects outputs of one command and writes the manifest."""

    def __init__(self, args, name):
        self.args = args
        self.name = name
        self.out = _out_dir(args)
        self.ext = ".json" if args.json else ".tsv"
        self.cfg = io.read_config(args.config, _overrides(args))
        arguments = {
            k: v for k, v in vars(args).items() if k not in ("func", "out") and v is not None
        }
        self.manifest = io.RunManifest(
            command=name, config=self.cfg.snapshot, seed=args.seed, arguments=arguments
        )
        if args.config:
            self.manifest.add_input(args.config)
        self.summary = {}

    def table(self, stem, columns, rows, meta=None, doc=None):
        path = self.out / f"{stem}{self.ext}"
        io.write_table(path, columns, rows, meta, doc, as_json=self.args.json)
        self.manifest.add_output(path)
        return path

    def file(self, path):
        self.manifest.add_output(path)

    def finish(self, **counts):
        self.manifest.event_counts.update(counts)
        path = self.manifest.write(self.out / f"{self.name}.manifest.json")
        doc = {"command": self.name, "manifest": str(path), "outputs": list(self.manifest.outputs)}
        doc.update(self.summary)
        if self.args.json:
            print(json.dumps(io._jsonable(doc), indent=2, sort_keys=True))
        else:
            for k, v in doc.items():
                print(f"{k}\t{v}")
        return EXIT_OK


# ---------------------------------------------------------------- commands


RATE_DOC = {
    "gamma_opt_hz": "optical damping / 2pi (Hz)",
    "a_plus": "upward transition rate A+ (1/s)",
    "a_minus": "downward transition rate A- (1/s)",
    "n_bar": "steady-state occupancy",
    "n_ba": "back-action limit",
    "c_q": "quantum cooperativity 4 g^2 / (gamma_m kappa n_th)",
    "clipping": "filter transmission of the broadened sideband",
    "rate_stokes_hz": "predicted detected Stokes rate, dark excluded (1/s)",
    "rate_antistokes_hz": "predicted detected anti-Stokes rate, dark excluded (1/s)",
    "ratio": "anti-Stokes / Stokes",
}


def cmd_rates(args):
    run = _Run(args, "rates")
    cfg = run.cfg
    grid = _grid(args.gamma_min_hz, args.gamma_max_hz, args.n_points, log=True)
    rows = []
    for g_hz in grid:
        drive = drive_for_gamma_opt(hz(g_hz), cfg.cavity, cfg.mode)
        conf = OptomechanicalConfig(cfg.cavity, cfg.mode, drive)
        r_s, r_as, p = detected_sideband_rates(conf, cfg.chain, cfg.detection)
        clip = r_s / (p.flux_stokes * cfg.detection.efficiency_total)
        rows.append([g_hz, p.a_plus, p.a_minus, p.n_bar, p.n_ba, p.c_q, clip, r_s, r_as,
                     r_as / r_s])
    meta = {"efficiency_total": cfg.detection.efficiency_total, "points": len(rows)}
    run.table("rates", list(RATE_DOC), rows, meta, RATE_DOC)
    return run.finish(grid_points=len(rows))


def cmd_filter_response(args):
    run = _Run(args, "filter-response")
    chain = run.cfg.chain
    if args.n_stages is not None:
        chain = FilterChain((chain.stages[0],) * args.n_stages, 0.0, chain.chain_insertion)
    grid = _grid(args.f_min_hz, args.f_max_hz, args.n_points, log=args.log)
    omega = hz(grid)
    rows = zip(grid, chain_transmission(chain, omega), rejection_db(chain, omega))
    doc = {
        "detuning_hz": "offset from the chain centre (Hz)",
        "transmission": "intensity transmission",
        "rejection_db": "attenuation relative to resonance (dB)",
    }
    meta = {
        "n_stages": len(chain.stages),
        "linewidth_hz": to_hz(float(chain.linewidths[0])),
        "group_delay_s": group_delay(chain),
    }
    run.table("filter_response", list(doc), rows, meta, doc)
    return run.finish(grid_points=grid.size)


def cmd_predict_counts(args):
    run = _Run(args, "predict-counts")
    run.manifest.add_input(args.psd)
    psd = io.read_psd(args.psd)
    centers = _grid(args.center_min_hz, args.center_max_hz, args.n_points, log=False)
    s = args.shot_noise_rel_sigma
    rows = []
    for c in centers:
        chain = run.cfg.chain.centered_at(hz(c))
        rate = predict_count_rate(chain, psd, args.calibration)
        lo = predict_count_rate(chain, psd.with_shot_noise(psd.shot_noise_level * (1 + s)),
                                args.calibration)
        hi = predict_count_rate(chain, psd.with_shot_noise(psd.shot_noise_level * (1 - s)),
                                args.calibration)
        rows.append([c, rate, lo, hi])
    doc = {
        "center_hz": "filter centre detuning from the drive (Hz)",
        "rate": "predicted count rate",
        "rate_low": "rate with the shot-noise floor raised by its uncertainty",
        "rate_high": "rate with the shot-noise floor lowered by its uncertainty",
    }
    meta = {"calibration": args.calibration, "shot_noise_rel_sigma": s}
    run.table("predicted_counts", list(doc), rows, meta, doc)
    return run.finish(grid_points=len(rows))


def cmd_simulate(args):
    run = _Run(args, "simulate")
    cfg = run.cfg
    if cfg.drive is None:
        raise ValidationError("config defines no drive", "drive.gamma_opt_hz")
    conf = OptomechanicalConfig(cfg.cavity, cfg.mode, cfg.drive)
    if args.channel == "both":
        streams = simulate_two_sideband_experiment(
            conf, cfg.chain, cfg.detection, args.duration_s, args.seed, n_bar=args.n_bar
        )
    else:
        sign = -1.0 if args.channel == "Stokes" else 1.0
        streams = [simulate_sideband_stream(
            conf, cfg.chain.centered_at(sign * cfg.mode.omega_m), cfg.detection,
            args.channel, args.duration_s, args.seed, n_bar=args.n_bar,
        )]
    counts = {}
    for stream in streams:
        ch = stream.channel_label
        path = run.out / f"clicks_{ch.replace('-', '').lower()}.txt"
        io.write_click_stream(path, stream)
        run.file(path)
        counts[f"clicks_{ch}"] = stream.n_clicks
        run.summary[f"rate_{ch}_hz"] = stream.rate
    return run.finish(**counts)


def cmd_g2(args):
    run = _Run(args, "g2")
    run.manifest.add_input(args.stream)
    stream = io.read_click_stream(args.stream)
    bw = args.bin_width_s or pilot_bin_width(stream, args.max_delay_s, args.exclusion_s)
    hist = build_histogram(stream, args.max_delay_s, bw, args.exclusion_s)
    curve = normalize_g2(hist, args.normalization, args.tail_start_s)
    fit = fit_g2(curve, weighting=args.weighting)
    lo, hi = fit.band(curve.tau, args.n_sigma)
    run.table(
        "histogram", ["bin_lo_s", "bin_hi_s", "counts"],
        zip(hist.bin_edges[:-1], hist.bin_edges[1:], hist.counts),
        {"total_clicks": hist.total_clicks, "duration_s": hist.duration},
        {"counts": "ordered click pairs with delay in (bin_lo, bin_hi]"},
    )
    doc = {
        "tau_s": "bin centre delay (s)",
        "g2": "normalised pair count",
        "sigma": "1-sigma Poisson error",
        "model": "fitted 1 + A exp(-2 tau / tau_c)",
        "band_low": f"model minus {args.n_sigma:g} sigma",
        "band_high": f"model plus {args.n_sigma:g} sigma",
    }
    run.table("g2", list(doc), zip(curve.tau, curve.g2, curve.sigma, fit.model(curve.tau), lo, hi),
              {"normalization": args.normalization}, doc)
    u = fit.uncertainties
    rows = [
        ["contrast_a", fit.contrast_a, u["contrast_a"]],
        ["g2_zero", fit.g2_zero, u["g2_zero"]],
        ["tau_c_s", fit.tau_c, u["tau_c"]],
        ["chi2", fit.chi2, math.nan],
        ["dof", fit.dof, math.nan],
    ]
    run.table("g2_fit", ["parameter", "value", "sigma"], rows,
              {"tau_c_constrained": fit.tau_c_constrained, "weighting": fit.weighting})
    dark = run.cfg.detection.dark_rate
    expected = diluted_contrast(max(stream.rate - dark, 0.0), dark) if stream.rate > 0 else 0.0
    run.summary.update(g2_zero=fit.g2_zero, tau_c_s=fit.tau_c,
                       tau_c_constrained=fit.tau_c_constrained,
                       g2_zero_expected_from_dark=1.0 + expected)
    return run.finish(clicks=stream.n_clicks, pairs=int(hist.counts.sum()))


def cmd_thermometry(args):
    run = _Run(args, "thermometry")
    run.manifest.add_input(args.stokes)
    run.manifest.add_input(args.antistokes)
    stokes = io.read_click_stream(args.stokes)
    antistokes = io.read_click_stream(args.antistokes)
    cfg = run.cfg
    res = thermometry_from_streams(stokes, antistokes, cfg.cavity, cfg.mode,
                                   cfg.detection.dark_rate, cfg.dark_rate_sigma)
    rows = [["ratio", res.ratio_r, res.ratio_sigma], ["n_est", res.n_est, res.sigma_n]]
    run.table("thermometry", ["quantity", "value", "sigma"], rows,
              {"dark_rate_hz": cfg.detection.dark_rate})
    run.summary.update(n_est=res.n_est, sigma_n=res.sigma_n)
    return run.finish(clicks_stokes=stokes.n_clicks, clicks_antistokes=antistokes.n_clicks)


def cmd_lock_cycle(args):
    run = _Run(args, "lock-cycle")
    cfg = run.cfg
    seed = 0 if args.seed is None else args.seed
    duty = run_duty_cycle(cfg.schedule, cfg.chain, cfg.drift, args.n_cycles, seed,
                          keep_trajectory=True)
    tr = duty.trajectory
    n_cav = tr.detunings.shape[1]
    sl = slice(None, None, max(1, args.trajectory_stride))
    cols = (["t_s"] + [f"phase_{i}" for i in range(n_cav)]
            + [f"detuning_hz_{i}" for i in range(n_cav)] + ["transmission", "shutter_open"])
    run.table(
        "lock_trajectory", cols,
        (
            [t, *(LockPhase(p).name for p in ph), *to_hz(d), tx, sh]
            for t, ph, d, tx, sh in zip(tr.t[sl], tr.phases[sl], tr.detunings[sl],
                                        tr.transmission[sl], tr.spcm_shutter_open[sl])
        ),
        {"stride": max(1, args.trajectory_stride)},
        {"transmission": "product of per-cavity Lorentzian transmissions"},
    )
    run.table(
        "duty_cycle", ["cycle", "mean_transmission", "relock_time_s"],
        zip(range(args.n_cycles), duty.per_cycle_mean, duty.relock_times),
        {"mean": duty.mean, "std": duty.std, "relock_timeouts": duty.relock_timeouts},
    )
    seeds = range(seed, seed + args.n_seeds)
    ens = frozen_ensemble(cfg.chain, cfg.drift, args.frozen_duration_s, seeds)
    step = max(1, int(round(0.01 / (ens["t"][1] - ens["t"][0]))))
    run.table("frozen_mean_curve", ["t_s", "mean_transmission"],
              zip(ens["t"][::step], ens["mean_curve"][::step]))
    run.table("frozen_time_to_half", ["seed", "time_to_half_s"], zip(seeds, ens["time_to_half"]),
              {"median_s": ens["median_time_to_half"], "hold_80_fraction": ens["hold_80_fraction"]})
    dens, edges = np.histogram(duty.per_cycle_mean, bins=20, range=(0.0, 1.0), density=True)
    run.table("transmission_density", ["bin_lo", "bin_hi", "density"],
              zip(edges[:-1], edges[1:], dens))
    run.summary.update(duty_mean=duty.mean, duty_std=duty.std,
                       median_time_to_half_s=ens["median_time_to_half"],
                       hold_80_fraction=ens["hold_80_fraction"])
    return run.finish(cycles=args.n_cycles, frozen_segments=args.n_seeds)


# ------------------------------------------------------------------ parser


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI config (default: bundled reference setup)")
    common.add_argument("--seed", type=int, help="master seed for all randomness")
    common.add_argument("--out", help=f"output directory (default ${io.OUTPUT_ENV} or .)")
    common.add_argument("--json", action="store_true", help="write JSON instead of TSV")
    common.add_argument("--detuning-hz", type=float, help="override cavity.detuning_hz")
    common.add_argument("--gamma-opt-hz", type=float, help="override drive.gamma_opt_hz")
    common.add_argument("--filter-linewidth-hz", type=float,
                        help="override filter.linewidth_hz")
    common.add_argument("--dark-rate-hz", type=float, help="override detection.dark_rate_hz")

    p = argparse.ArgumentParser(
        prog="phononcount",
        description="Phonon-counting models, simulations and analyses.",
        epilog="exit codes: 0 ok, 2 invalid input, 3 numerical failure, 4 I/O error",
    )
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("rates", parents=[common], help="rate model over a damping grid")
    s.add_argument("--gamma-min-hz", type=float, default=255.0)
    s.add_argument("--gamma-max-hz", type=float, default=11e3)
    s.add_argument("--n-points", type=int, default=25)
    s.set_defaults(func=cmd_rates)

    s = sub.add_parser("filter-response", parents=[common], help="filter chain rejection curve")
    s.add_argument("--f-min-hz", type=float, default=-2e6)
    s.add_argument("--f-max-hz", type=float, default=2e6)
    s.add_argument("--n-points", type=int, default=801)
    s.add_argument("--n-stages", type=int)
    s.add_argument("--log", action="store_true", help="logarithmic detuning grid")
    s.set_defaults(func=cmd_filter_response)

    s = sub.add_parser("predict-counts", parents=[common], help="count rate from a PSD trace")
    s.add_argument("--psd", required=True, help="PSD file: freq_hz, psd[, shot_noise]")
    s.add_argument("--calibration", type=float, default=1.0,
                   help="counts/s per shot-noise unit x rad/s")
    s.add_argument("--center-min-hz", type=float, default=1.42e6)
    s.add_argument("--center-max-hz", type=float, default=1.59e6)
    s.add_argument("--n-points", type=int, default=171)
    s.add_argument("--shot-noise-rel-sigma", type=float, default=0.01)
    s.set_defaults(func=cmd_predict_counts)

    s = sub.add_parser("simulate", parents=[common], help="simulate sideband click streams")
    s.add_argument("--channel", choices=["Stokes", "anti-Stokes", "both"], default="both")
    s.add_argument("--duration-s", type=float, default=10.0)
    s.add_argument("--n-bar", type=float, help="force the occupancy instead of steady state")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("g2", parents=[common], help="g2 histogram and bunching fit")
    s.add_argument("--stream", required=True)
    s.add_argument("--max-delay-s", type=float, default=1.5e-3)
    s.add_argument("--bin-width-s", type=float)
    s.add_argument("--exclusion-s", type=float, default=500e-9)
    s.add_argument("--normalization", choices=["global", "tail"], default="global")
    s.add_argument("--tail-start-s", type=float)
    s.add_argument("--weighting", choices=["pearson", "sigma"], default="pearson")
    s.add_argument("--n-sigma", type=float, default=3.0)
    s.set_defaults(func=cmd_g2)

    s = sub.add_parser("thermometry", parents=[common], help="occupancy from two streams")
    s.add_argument("--stokes", required=True)
    s.add_argument("--antistokes", required=True)
    s.set_defaults(func=cmd_thermometry)

    s = sub.add_parser("lock-cycle", parents=[common], help="filter lock duty-cycle simulation")
    s.add_argument("--n-cycles", type=int, default=100)
    s.add_argument("--n-seeds", type=int, default=200, help="frozen-segment ensemble size")
    s.add_argument("--frozen-duration-s", type=float, default=10.0)
    s.add_argument("--trajectory-stride", type=int, default=10,
                   help="keep every Nth 1 ms controller sample in the trajectory file")
    s.set_defaults(func=cmd_lock_cycle)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.seed is not None and args.seed < 0:
        parser.error("--seed must be >= 0")
    try:
        return args.func(args)
    except ValidationError as err:
        print(f"phononcount: error: {err}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericalError as err:
        print(f"phononcount: numerical failure: {err}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as err:
        print(f"phononcount: I/O error: {err}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())

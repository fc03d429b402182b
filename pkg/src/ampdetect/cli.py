"""Command-line front end: simulate / sweep / se / calibrate.

CSV artifacts go to --out (or stdout); human-readable summaries go to stderr,
so the two never interleave.  Exit codes: 0 success, 2 configuration error,
3 I/O error, 4 every trial diverged.
"""

from __future__ import annotations

import argparse
import csv
import math
import sys
from dataclasses import replace

import numpy as np

from . import amp, experiments
from .config import ConfigError
from .scenario import draw_beta_population

EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_DIVERGED = 4

_BETA_POP_STREAM = 0xBE7A  # rng stream id for the large-scale-gain population


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ampdetect",
        description="Grant-free activity detection and EIB decoding via AMP: "
                    "Monte Carlo simulation and state-evolution tools.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="flat key-value config file")
        p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config key (repeatable, last wins)")
        p.add_argument("--out", default=None, help="output CSV path (default: stdout)")
        p.add_argument("--workers", type=int, default=1, help="max parallel workers")
        p.add_argument("--quiet", action="store_true", help="suppress progress and summaries")

    p_sim = sub.add_parser("simulate", help="run fixed-config trials for each algorithm")
    common(p_sim)
    p_sweep = sub.add_parser("sweep", help="run the sweep described by the config")
    common(p_sweep)
    p_se = sub.add_parser("se", help="state-evolution tau^2 prediction (and optional empirical overlay)")
    common(p_se)
    p_se.add_argument("--algorithm", default=None, choices=sorted(experiments.ALGORITHMS),
                      help="algorithm mode (default: first algorithm in the config)")
    p_se.add_argument("--se-samples", type=int, default=100_000,
                      help="Monte Carlo samples per state-evolution iteration")
    p_se.add_argument("--empirical-trials", type=int, default=0,
                      help="also average tau^2 over this many simulated trials")
    p_cal = sub.add_parser("calibrate", help="equal-error threshold scale per algorithm")
    common(p_cal)
    return parser


def _say(args, message: str) -> None:
    if not args.quiet:
        print(message, file=sys.stderr)


def _open_out(args):
    if args.out is None:
        return sys.stdout, False
    try:
        return open(args.out, "w", encoding="utf-8", newline=""), True
    except OSError as exc:
        raise IOError(f"cannot open {args.out} for writing: {exc}") from exc


def _emit_rows(args, rows) -> None:
    if args.out is None:
        experiments.write_rows(sys.stdout, rows, include_header=True)


def _summary_line(row) -> str:
    def fmt(value, ci):
        if math.isnan(value):
            return "n/a"
        return f"{value:.4g}±{ci:.2g}"

    extra = ""
    if not math.isnan(row.eib_err) or row.algorithm != "AMP_NO_EIB":
        extra = f" eib_err={fmt(row.eib_err, row.eib_err_ci)}"
    return (
        f"{row.algorithm} {row.sweep_param}={row.sweep_value}: "
        f"p_miss={fmt(row.p_miss, row.p_miss_ci)} p_fa={fmt(row.p_fa, row.p_fa_ci)}"
        f"{extra} (diverged {row.diverged}/{row.trials})"
    )


def cmd_simulate(args) -> int:
    spec = experiments.load_sweep(args.config, args.override)
    spec = replace(spec, param="n_antennas", values=(spec.base.num_antennas,))
    rows = experiments.run_sweep(
        spec, out_path=args.out, workers=args.workers,
        progress=None if args.quiet else lambda r: _say(args, _summary_line(r)),
    )
    _emit_rows(args, rows)
    if all(row.diverged >= row.trials for row in rows):
        _say(args, "every trial diverged")
        return EXIT_DIVERGED
    return 0


def cmd_sweep(args) -> int:
    spec = experiments.load_sweep(args.config, args.override)
    rows = experiments.run_sweep(
        spec, out_path=args.out, workers=args.workers,
        progress=None if args.quiet else lambda r: _say(args, _summary_line(r)),
    )
    _emit_rows(args, rows)
    if all(row.diverged >= row.trials for row in rows):
        _say(args, "every trial diverged")
        return EXIT_DIVERGED
    return 0


def cmd_se(args) -> int:
    spec = experiments.load_sweep(args.config, args.override)
    cfg = spec.base
    algorithm = args.algorithm or spec.algorithms[0]
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(_BETA_POP_STREAM,)))
    population = draw_beta_population(cfg, 200_000, rng)
    taus = amp.state_evolution(cfg, population, algorithm, num_samples=args.se_samples)
    empirical = None
    if args.empirical_trials > 0:
        empirical = experiments.empirical_tau_trajectory(cfg, algorithm, args.empirical_trials)

    out, close = _open_out(args)
    try:
        writer = csv.writer(out)
        header = ["iter", "tau_sq_se"] + (["tau_sq_empirical"] if empirical is not None else [])
        writer.writerow(header)
        for it, tau in enumerate(taus):
            rec = [it, repr(float(tau))]
            if empirical is not None:
                rec.append(repr(float(empirical[it])))
            writer.writerow(rec)
    finally:
        if close:
            out.close()
    _say(args, f"state evolution for {algorithm}: tau0^2={taus[0]:.4g} -> tau{len(taus)-1}^2={taus[-1]:.4g}")
    return 0


def cmd_calibrate(args) -> int:
    spec = experiments.load_sweep(args.config, args.override)
    results = []
    for alg in sorted(spec.algorithms):
        cfg = spec.base
        scale, p_miss, p_fa = experiments.calibrate_point(
            cfg, alg, spec.cal_trials or 2_000, workers=args.workers,
            value_key=cfg.num_antennas,
        )
        results.append((alg, scale, p_miss, p_fa))
        _say(args, f"{alg}: threshold_scale={scale:.6g} (cal p_miss={p_miss:.4g}, p_fa={p_fa:.4g})")
    out, close = _open_out(args)
    try:
        writer = csv.writer(out)
        writer.writerow(["algorithm", "threshold_scale", "cal_p_miss", "cal_p_fa"])
        for alg, scale, p_miss, p_fa in results:
            writer.writerow([alg, repr(scale), repr(p_miss), repr(p_fa)])
    finally:
        if close:
            out.close()
    return 0


_COMMANDS = {
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
    "se": cmd_se,
    "calibrate": cmd_calibrate,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())

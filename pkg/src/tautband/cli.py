"""Command-line entry point: ``tautband <subcommand> [options]``.

Exit status is 0 on success, 1 for bad input (flags, files, infeasible
tubes) and 2 when an internal consistency check fails. Diagnostics and
progress go to standard error; data goes to the files named by flags, or
to standard output when no file is given.

Every JSON report embeds a ``manifest`` block with the subcommand, the
resolved parameters, the seed and the tool version. ``--manifest PATH``
additionally writes a manifest with the command line and wall time, and
``--from-manifest PATH`` reruns a recorded configuration; options given
on the command line override the recorded ones.
"""

from __future__ import annotations

import argparse
import contextlib
import json
import math
import os
import sys
import time

import numpy as np

from . import __version__
from .errors import InputError, InvariantError

# options that only steer where output goes or how fast it is produced
IO_KEYS = {"out", "hist", "per_path", "manifest", "summary", "threads", "quiet", "from_manifest"}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise InputError(message)


def _env_threads() -> int:
    raw = os.environ.get("TAUTBAND_THREADS", "1")
    try:
        k = int(raw)
    except ValueError:
        raise InputError(f"TAUTBAND_THREADS must be an integer, got {raw!r}") from None
    return max(k, 1)


def _common(p, seed=True, threads=True):
    if seed:
        p.add_argument("--seed", type=int, default=0, help="master seed (default 0)")
    if threads:
        p.add_argument("--threads", type=int, default=None,
                       help="worker threads (default: $TAUTBAND_THREADS or 1); results do not depend on it")
    p.add_argument("--quiet", action="store_true", help="suppress progress on standard error")
    p.add_argument("--manifest", help="also write a run manifest (JSON) to this path")
    p.add_argument("--from-manifest", dest="from_manifest",
                   help="rerun the configuration recorded in a manifest or JSON report")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="tautband", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"tautband {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="SUBCOMMAND", parser_class=_Parser)

    p = sub.add_parser(
        "solve", help="taut string through a tube read from CSV",
        description="Input CSV columns: t,lower,upper. Output CSV columns: t,value,contact "
        "(contact is lower, upper or interior).",
    )
    p.add_argument("--tube", help="tube CSV with header t,lower,upper")
    p.add_argument("--end", choices=("fixed", "free"), default="free",
                   help="free: end anywhere in the last box; fixed: end at --end-value")
    p.add_argument("--start", type=float, default=0.0, help="value at the first knot (default 0)")
    p.add_argument("--end-value", dest="end_value", type=float, help="end value for --end fixed")
    p.add_argument("--out", help="result CSV (default: standard output)")
    _common(p, seed=False, threads=False)

    p = sub.add_parser(
        "estimate", help="Monte Carlo estimate of the normalised energy",
        description="Output JSON fields: count, normalized, sample_mean, sample_median, "
        "sample_variance, second_moment, standard_error, median_standard_error, raw_variance, "
        "raw_variance_standard_error, raw_second_moment, raw_second_moment_standard_error, "
        "histogram, [occupancy], config, manifest. Histogram CSV columns: left,right,count. "
        "Per-path CSV columns: index,seed,value,sqrt_energy.",
    )
    p.add_argument("--mode", choices=("taut-fixed", "taut-free", "pursuit"), default="taut-fixed")
    p.add_argument("--t", dest="horizon", type=float, default=1000.0, help="horizon T (default 1000)")
    p.add_argument("--steps-per-unit", dest="steps_per_unit", type=float, default=1000.0,
                   help="grid steps per unit time (default 1000)")
    p.add_argument("--r", dest="radius", type=float, default=1.0, help="tube radius (default 1)")
    p.add_argument("--paths", type=int, default=100, help="number of paths (default 100)")
    p.add_argument("--bins", type=int, default=40, help="histogram bins (default 40)")
    p.add_argument("--clamp", type=float, default=0.99, help="pursuit clamp (default 0.99)")
    p.add_argument("--out", help="stats JSON (default: standard output)")
    p.add_argument("--hist", help="histogram CSV")
    p.add_argument("--per-path", dest="per_path", help="per-path CSV")
    _common(p)

    p = sub.add_parser(
        "pursuit", help="Markovian pursuit with the optimal speed law",
        description="Output JSON as for estimate with mode pursuit. Histogram CSV columns: "
        "left,right,count,reference_probability (occupancy of h - W over [-1, 1] against "
        "the binned cos^2(pi x/2) density).",
    )
    p.add_argument("--t", dest="horizon", type=float, default=1000.0, help="horizon T (default 1000)")
    p.add_argument("--steps", type=int, default=1_000_000, help="grid steps N (default 10^6)")
    p.add_argument("--paths", type=int, default=100, help="number of paths (default 100)")
    p.add_argument("--clamp", type=float, default=0.99, help="largest allowed |h - W| (default 0.99)")
    p.add_argument("--bins", type=int, default=40, help="energy histogram bins (default 40)")
    p.add_argument("--out", help="stats JSON (default: standard output)")
    p.add_argument("--hist", help="occupancy histogram CSV")
    p.add_argument("--per-path", dest="per_path", help="per-path CSV")
    _common(p)

    p = sub.add_parser(
        "bounds", help="bounds on the energy constant",
        description="Output JSON fields: isoperimetric_upper, free_knot_upper, oscillation_lower, "
        "e1, e2, best_x, osc_objective_at_best_x (12 significant digits).",
    )
    p.add_argument("--out", help="report JSON (default: standard output)")
    _common(p, seed=False, threads=False)

    p = sub.add_parser(
        "buffer", help="optimal loss schedule for a buffered channel",
        description="Input CSV columns: slot,S,C. Output CSV columns: "
        "slot,S,C,L_opt,L_fifo,B_opt,B_fifo (FIFO columns empty without --compare-fifo). "
        "Summary JSON fields: F_opt, [F_fifo], total_loss_opt, [total_loss_fifo], flags, manifest.",
    )
    p.add_argument("--trace", help="trace CSV with header slot,S,C")
    p.add_argument("--buffer", type=float, help="buffer size B >= 0")
    p.add_argument("--phi", default="quad", help="quad, exp, linear, hinge2 or poly:a0,a1,... (default quad)")
    p.add_argument("--compare-fifo", dest="compare_fifo", action="store_true",
                   help="also compute the FIFO schedule and its penalty")
    p.add_argument("--out", help="schedule CSV (default: standard output)")
    p.add_argument("--summary", help="summary JSON (default: standard error)")
    _common(p, seed=False, threads=False)

    p = sub.add_parser(
        "sweep", help="convergence sweep over horizons",
        description="Output JSON fields: summary (horizons, means, standard_errors, "
        "abs_differences, differences_decreasing, raw_second_moments, raw_second_moment_ses, "
        "second_moment_nondecreasing), runs (one stats object per horizon), manifest.",
    )
    p.add_argument("--mode", choices=("taut-fixed", "taut-free", "pursuit"), default="taut-fixed")
    p.add_argument("--t-list", dest="t_list", default="125,250,500,1000",
                   help="comma-separated increasing horizons (default 125,250,500,1000)")
    p.add_argument("--steps-per-unit", dest="steps_per_unit", type=float, default=1000.0)
    p.add_argument("--r", dest="radius", type=float, default=1.0)
    p.add_argument("--paths", type=int, default=100)
    p.add_argument("--bins", type=int, default=40)
    p.add_argument("--clamp", type=float, default=0.99)
    p.add_argument("--out", help="sweep JSON (default: standard output)")
    _common(p)
    return parser


def _explicit_keys(parser, argv) -> set:
    """Names of the options actually present on the command line."""
    ns = argparse.Namespace()
    suppressing = build_parser()
    for action in _all_actions(suppressing):
        action.default = argparse.SUPPRESS
    suppressing.parse_args(argv, ns)
    return set(vars(ns))


def _all_actions(parser):
    for a in parser._actions:
        yield a
        if isinstance(a, argparse._SubParsersAction):
            for sp in a.choices.values():
                yield from sp._actions


def _apply_manifest(args, argv, parser):
    try:
        with open(args.from_manifest) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise InputError(f"cannot read manifest: {exc.strerror}: {args.from_manifest}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"manifest is not valid JSON (line {exc.lineno}): {args.from_manifest}") from None
    man = data.get("manifest", data)
    if man.get("subcommand") != args.command:
        raise InputError(f"manifest records subcommand {man.get('subcommand')!r}, not {args.command!r}")
    explicit = _explicit_keys(parser, argv)
    for key, value in man.get("config", {}).items():
        if key in explicit or key == "command":
            continue
        if not hasattr(args, key):
            raise InputError(f"manifest has unknown option {key!r}")
        setattr(args, key, value)


def _config(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in IO_KEYS and k != "command"}


def _manifest(args) -> dict:
    cfg = _config(args)
    return {
        "subcommand": args.command,
        "config": cfg,
        "seed": cfg.get("seed"),
        "version": __version__,
    }


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if math.isfinite(f) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _dumps(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2) + "\n"


@contextlib.contextmanager
def _output(path, default=None):
    if path is None:
        yield default if default is not None else sys.stdout
        return
    try:
        fh = open(path, "w", newline="")
    except OSError as exc:
        raise InputError(f"cannot write {path}: {exc.strerror}") from None
    with fh:
        yield fh


def _open_input(path, what):
    if path is None:
        raise InputError(f"--{what} is required")
    try:
        return open(path, newline="")
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None


def _progress(args, label):
    if args.quiet:
        return None
    from .montecarlo import ProgressPrinter

    return ProgressPrinter(sys.stderr, label)


def _threads(args) -> int:
    k = args.threads if args.threads is not None else _env_threads()
    if k < 1:
        raise InputError("--threads must be at least 1")
    return k


def _cmd_solve(args):
    from .tautstring import FixedAt, read_tube_csv, solve, write_result_csv

    end = None
    if args.end == "fixed":
        if args.end_value is None:
            raise InputError("--end fixed needs --end-value")
        end = FixedAt(args.end_value)
    elif args.end_value is not None:
        raise InputError("--end-value only applies with --end fixed")
    with _open_input(args.tube, "tube") as fh:
        tube = read_tube_csv(fh, start=args.start, end=end)
    res = solve(tube)
    with _output(args.out) as fh:
        write_result_csv(res, fh)
    if not args.quiet:
        print(f"energy {res.energy_value:.12g}", file=sys.stderr)


def _estimate(args, cfg, hist_reference):
    from .montecarlo import run_experiment, write_histogram_csv, write_per_path_csv
    from .pursuit import binned_stationary_probabilities

    stats = run_experiment(cfg, threads=_threads(args), progress=_progress(args, f"{cfg.mode}: "))
    report = stats.to_dict(cfg)
    report["manifest"] = _manifest(args)
    with _output(args.out) as fh:
        fh.write(_dumps(report))
    if args.hist:
        with _output(args.hist) as fh:
            if hist_reference and stats.occupancy is not None:
                occ = stats.occupancy
                write_histogram_csv(occ, fh, binned_stationary_probabilities(occ.edges))
            else:
                write_histogram_csv(stats.histogram, fh)
    if args.per_path:
        with _output(args.per_path) as fh:
            write_per_path_csv(stats, fh)


def _cmd_estimate(args):
    from .montecarlo import ExperimentConfig

    cfg = ExperimentConfig.from_rate(
        args.horizon, args.steps_per_unit, radius=args.radius, paths=args.paths,
        master_seed=args.seed, mode=args.mode, bins=args.bins, clamp=args.clamp,
    )
    _estimate(args, cfg, hist_reference=False)


def _cmd_pursuit(args):
    from .montecarlo import ExperimentConfig

    cfg = ExperimentConfig(
        horizon=args.horizon, steps=args.steps, radius=1.0, paths=args.paths,
        master_seed=args.seed, mode="pursuit", bins=args.bins, clamp=args.clamp,
    )
    _estimate(args, cfg, hist_reference=True)


def _cmd_bounds(args):
    from .bounds import bound_report

    report = json.loads(bound_report().to_json(12))
    report["manifest"] = _manifest(args)
    with _output(args.out) as fh:
        fh.write(_dumps(report))


def _cmd_buffer(args):
    from .buffer import fifo_losses, optimal_losses, parse_penalty, penalty, read_trace_csv, write_schedule_csv

    if args.buffer is None:
        raise InputError("--buffer is required")
    phi = parse_penalty(args.phi)
    with _open_input(args.trace, "trace") as fh:
        trace = read_trace_csv(fh)
    opt = optimal_losses(trace, args.buffer, phi)
    fifo = fifo_losses(trace, args.buffer) if args.compare_fifo else None
    with _output(args.out) as fh:
        write_schedule_csv(trace, opt, fifo, fh)
    summary = {
        "F_opt": penalty(opt, trace, phi),
        "total_loss_opt": float(opt.accumulated[-1]),
        "flags": opt.flags,
    }
    if fifo is not None:
        summary["F_fifo"] = penalty(fifo, trace, phi)
        summary["total_loss_fifo"] = float(fifo.accumulated[-1])
    summary["manifest"] = _manifest(args)
    with _output(args.summary, sys.stderr) as fh:
        fh.write(_dumps(summary))


def _cmd_sweep(args):
    from .montecarlo import ExperimentConfig, convergence_sweep, summarize_sweep

    try:
        horizons = [float(x) for x in str(args.t_list).split(",") if x.strip()]
    except ValueError:
        raise InputError(f"--t-list must be comma-separated numbers, got {args.t_list!r}") from None
    if not horizons:
        raise InputError("--t-list is empty")
    base = ExperimentConfig.from_rate(
        horizons[0], args.steps_per_unit, radius=args.radius, paths=args.paths,
        master_seed=args.seed, mode=args.mode, bins=args.bins, clamp=args.clamp,
    )
    results = convergence_sweep(base, horizons, threads=_threads(args), progress=_progress(args, "sweep: "))
    report = {
        "summary": summarize_sweep(results).to_dict(),
        "runs": [dict(stats.to_dict(), horizon=T) for T, stats in results],
        "manifest": _manifest(args),
    }
    with _output(args.out) as fh:
        fh.write(_dumps(report))


COMMANDS = {
    "solve": _cmd_solve,
    "estimate": _cmd_estimate,
    "pursuit": _cmd_pursuit,
    "bounds": _cmd_bounds,
    "buffer": _cmd_buffer,
    "sweep": _cmd_sweep,
}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    started = time.monotonic()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_help(sys.stderr)
            raise InputError("a subcommand is required")
        if args.from_manifest:
            _apply_manifest(args, argv, parser)
        COMMANDS[args.command](args)
        if args.manifest:
            man = dict(_manifest(args), argv=argv, wall_time_seconds=time.monotonic() - started)
            with _output(args.manifest) as fh:
                fh.write(_dumps(man))
    except InputError as exc:
        print(f"tautband: error: {exc}", file=sys.stderr)
        return 1
    except InvariantError as exc:
        print(f"tautband: internal check failed: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())

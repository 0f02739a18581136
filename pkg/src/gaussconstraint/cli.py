"""Command-line front end.

Subcommands::

    truncate   moments of N(0, 1) truncated by Gaussian-distributed bounds
    klscan     KL divergence of the interval approximation over (gamma, delta)
    simulate   corridor Monte Carlo RMSE sweep
    trace      per-step estimates of one corridor run

Exit status is 0 on success, 1 on a runtime failure and 2 on a usage error.
Tables are CSV with a header row (floats written with ``repr`` so they read
back exactly) or JSON with the same field names.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from dataclasses import dataclass

import numpy as np

from .corridor import METHODS, ROBOTS, SIGMA_S_GRID_CM, RobotProfile, SimConfig, run_experiment, simulate_run
from .errors import GaussConstraintError
from .kalman import FeedbackMode
from .moments import (
    TransformedConstraint,
    approx_interval_density,
    exact_density,
    interval_kl_divergence,
    metrics_constraint,
    overlap_metric,
    shape_metric,
    truncation_moments,
)
from .scalar_gauss import NO_LOWER, NO_UPPER, GaussianScalar, oracle_moments, std_normal_pdf

SIM_FIELDS = ("robot", "sigma_s_cm", "method", "rmse_m", "rmse_stderr_m", "n_runs", "seed")
IMPROVEMENT_FIELDS = ("robot", "sigma_s_cm", "baseline", "method", "improvement_pct")
IMPROVEMENT_PAIRS = (("unconstrained", "hard"), ("unconstrained", "soft"), ("hard", "soft"))
KL_FIELDS = ("gamma", "delta", "kl")
KL_HEADER = "# interval realising (gamma, delta): mu_c = -mu_d, sigma_d = 1, sigma_c = 10**-delta"


class UsageError(Exception):
    pass


@dataclass(frozen=True)
class ExperimentSpec:
    robot: RobotProfile
    sigmas_cm: tuple
    n_runs: int
    seed: int
    feedback: FeedbackMode
    output: str | None = None
    fmt: str = "csv"


def _float_list(text):
    try:
        vals = [float(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}") from exc
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _nonneg_int(text):
    val = int(text)
    if val < 0:
        raise argparse.ArgumentTypeError("must be a nonnegative integer")
    return val


def write_table(rows, fields, stream, fmt="csv", header=None):
    if fmt == "json":
        json.dump([{k: r[k] for k in fields} for r in rows], stream, indent=1)
        stream.write("\n")
        return
    if header:
        stream.write(header + "\n")
    w = csv.DictWriter(stream, fieldnames=fields, lineterminator="\n", extrasaction="ignore")
    w.writeheader()
    for r in rows:
        w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})


def read_table(stream):
    """Parse CSV written by :func:`write_table` back into dicts of floats and strings."""
    lines = [ln for ln in stream if not ln.startswith("#")]
    out = []
    for r in csv.DictReader(lines):
        rec = {}
        for k, v in r.items():
            try:
                rec[k] = int(v)
            except ValueError:
                try:
                    rec[k] = float(v)
                except ValueError:
                    rec[k] = v
        out.append(rec)
    return out


def _emit(path, writer):
    if path in (None, "-"):
        writer(sys.stdout)
    else:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer(fh)


# -- truncate ---------------------------------------------------------------

def _bound(mu, sigma, missing, name):
    if mu is None:
        if sigma is not None:
            raise UsageError(f"--{name}-sigma given without --{name}-mu")
        return missing
    if not math.isfinite(mu):
        raise UsageError(f"--{name}-mu must be finite")
    sigma = 0.0 if sigma is None else sigma
    if not sigma >= 0:
        raise UsageError(f"--{name}-sigma must be nonnegative")
    return GaussianScalar(mu, sigma)


def cmd_truncate(args):
    lower = _bound(args.lower_mu, args.lower_sigma, NO_LOWER, "lower")
    upper = _bound(args.upper_mu, args.upper_sigma, NO_UPPER, "upper")
    if lower is NO_LOWER and upper is NO_UPPER:
        raise UsageError("give at least one of --lower-mu / --upper-mu")
    if lower is not NO_LOWER and upper is not NO_UPPER and not lower.mu < upper.mu:
        raise UsageError("--lower-mu must be below --upper-mu")
    tc = TransformedConstraint(lower, upper)
    interval = lower is not NO_LOWER and upper is not NO_UPPER
    approx = truncation_moments(tc)
    _, o_mean, o_var = oracle_moments(exact_density(tc))
    out = [("approx_mean", float(approx.mean)), ("approx_variance", float(approx.variance)),
           ("oracle_mean", o_mean), ("oracle_variance", o_var),
           ("delta_mean", float(approx.mean) - o_mean), ("delta_variance", float(approx.variance) - o_var)]
    if interval:
        _, z_mean, z_var = oracle_moments(approx_interval_density(tc))
        out += [("surrogate_oracle_mean", z_mean), ("surrogate_oracle_variance", z_var)]
        if lower.sigma + upper.sigma > 0:
            out.append(("gamma", overlap_metric(tc)))
        if lower.sigma > 0 and upper.sigma > 0:
            out.append(("delta", shape_metric(tc)))
    for k, v in out:
        print(f"{k} {v!r}")
    if args.curve:
        _emit(args.curve, lambda fh: _write_curve(fh, tc, float(approx.mean), float(approx.variance)))
    return 0


def _write_curve(fh, tc, mean, var, n=401):
    dens = exact_density(tc)
    area, _, _ = oracle_moments(dens)
    sd = math.sqrt(var)
    zeta = np.linspace(min(-4.0, mean - 5 * sd), max(4.0, mean + 5 * sd), n)
    rows = [{"zeta": float(z), "actual": dens.func(float(z)) / area,
             "approx": float(std_normal_pdf((z - mean) / sd) / sd)} for z in zeta]
    write_table(rows, ("zeta", "actual", "approx"), fh)


# -- klscan -----------------------------------------------------------------

def cmd_klscan(args):
    if any(g <= 0 for g in args.gamma) or any(d < 0 for d in args.delta):
        raise UsageError("need gamma > 0 and delta >= 0")
    rows = []
    for g in args.gamma:
        for d in args.delta:
            rows.append({"gamma": g, "delta": d, "kl": interval_kl_divergence(metrics_constraint(g, d))})
    _emit(args.output, lambda fh: write_table(rows, KL_FIELDS, fh, args.format, KL_HEADER))
    return 0


# -- simulate / trace ---------------------------------------------------------

def _experiment_spec(args):
    base = ROBOTS[args.robot]
    if any(v is not None and not v >= 0 for v in (args.sigma_a, args.sigma_v)):
        raise UsageError("--sigma-a and --sigma-v must be nonnegative")
    robot = RobotProfile(
        base.name if args.sigma_a is None and args.sigma_v is None else "custom",
        base.sigma_a if args.sigma_a is None else args.sigma_a,
        base.sigma_v if args.sigma_v is None else args.sigma_v,
        base.accel_phases,
        base.v0,
    )
    if any(s < 0 for s in args.sigma_s):
        raise UsageError("--sigma-s values must be nonnegative")
    if args.runs < 1:
        raise UsageError("--runs must be at least 1")
    mode = FeedbackMode.TRUNCATED_FEEDBACK if args.feedback else FeedbackMode.NO_FEEDBACK
    return ExperimentSpec(robot, tuple(args.sigma_s), args.runs, args.seed, mode, args.output, args.format)


def sweep_records(spec: ExperimentSpec):
    rmse_rows, imp_rows = [], []
    for s in spec.sigmas_cm:
        res = run_experiment(SimConfig(spec.robot, s, spec.n_runs, seed=spec.seed, feedback=spec.feedback))
        for m in METHODS:
            rmse_rows.append({"robot": spec.robot.name, "sigma_s_cm": float(s), "method": m,
                              "rmse_m": res.rmse[m], "rmse_stderr_m": res.stderr[m],
                              "n_runs": spec.n_runs, "seed": spec.seed})
        for base, m in IMPROVEMENT_PAIRS:
            imp_rows.append({"robot": spec.robot.name, "sigma_s_cm": float(s), "baseline": base,
                             "method": m, "improvement_pct": res.improvement(base, m)})
    return rmse_rows, imp_rows


def cmd_simulate(args):
    spec = _experiment_spec(args)
    rmse_rows, imp_rows = sweep_records(spec)
    if spec.fmt == "json":
        def writer(fh):
            json.dump({"rmse": [{k: r[k] for k in SIM_FIELDS} for r in rmse_rows],
                       "improvements": [{k: r[k] for k in IMPROVEMENT_FIELDS} for r in imp_rows]}, fh, indent=1)
            fh.write("\n")
    else:
        def writer(fh):
            write_table(rmse_rows, SIM_FIELDS, fh)
    _emit(spec.output, writer)
    if args.improvements:
        _emit(args.improvements, lambda fh: write_table(imp_rows, IMPROVEMENT_FIELDS, fh, spec.fmt))
    return 0


def trace_rows(cfg: SimConfig):
    res = simulate_run(cfg, 0)
    rows = []
    for k, t in enumerate(res.times):
        row = {"time_s": float(t), "truth_m": float(res.truth[k, 0])}
        for m in METHODS:
            mean, sd = res.position_band(m)
            row[f"{m}_mean_m"] = float(mean[k])
            row[f"{m}_std_m"] = float(sd[k])
        row["feedback"] = cfg.feedback.value
        rows.append(row)
    return rows


TRACE_FIELDS = ("time_s", "truth_m") + tuple(f"{m}_{q}_m" for m in METHODS for q in ("mean", "std")) + ("feedback",)


def cmd_trace(args):
    if args.runs != 1:
        raise UsageError("trace needs exactly one run (--runs 1)")
    if len(args.sigma_s) != 1:
        raise UsageError("trace takes a single --sigma-s value")
    spec = _experiment_spec(args)
    cfg = SimConfig(spec.robot, spec.sigmas_cm[0], 1, seed=spec.seed, feedback=spec.feedback)
    rows = trace_rows(cfg)
    _emit(spec.output, lambda fh: write_table(rows, TRACE_FIELDS, fh, spec.fmt))
    return 0


# -- parser -------------------------------------------------------------------

def _add_experiment_args(p, sigma_default):
    p.add_argument("--robot", choices=sorted(ROBOTS), default="A", help="robot preset")
    p.add_argument("--sigma-a", type=float, help="override acceleration noise (cm/s^2)")
    p.add_argument("--sigma-v", type=float, help="override initial velocity noise (cm/s)")
    p.add_argument("--sigma-s", type=_float_list, default=list(sigma_default),
                   help="comma-separated set-point deviations (cm)")
    p.add_argument("--seed", type=_nonneg_int, default=0)
    p.add_argument("--feedback", action="store_true", help="feed truncated estimates back into the filter")
    p.add_argument("--output", "-o", help="output path (default stdout)")
    p.add_argument("--format", choices=("csv", "json"), default="csv")


def build_parser():
    parser = argparse.ArgumentParser(prog="gaussconstraint", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("truncate", help="truncate N(0, 1) by Gaussian bounds")
    for side in ("lower", "upper"):
        p.add_argument(f"--{side}-mu", type=float)
        p.add_argument(f"--{side}-sigma", type=float)
    p.add_argument("--curve", help="write zeta, actual, approx samples to this CSV path")
    p.set_defaults(func=cmd_truncate)

    p = sub.add_parser("klscan", help="KL divergence over overlap/shape metric grids")
    p.add_argument("--gamma", type=_float_list, default=[0.5, 1.0, 2.0, 3.0, 5.0, 10.0])
    p.add_argument("--delta", type=_float_list, default=[0.0, 0.3, 0.6, 1.0])
    p.add_argument("--output", "-o")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.set_defaults(func=cmd_klscan)

    p = sub.add_parser("simulate", help="corridor RMSE sweep")
    _add_experiment_args(p, SIGMA_S_GRID_CM)
    p.add_argument("--runs", type=int, default=200)
    p.add_argument("--improvements", help="also write percentage improvements to this path")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("trace", help="per-step trace of a single corridor run")
    _add_experiment_args(p, (15.0,))
    p.add_argument("--runs", type=int, default=1)
    p.set_defaults(func=cmd_trace)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        parser.error(str(exc))
    except (GaussConstraintError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

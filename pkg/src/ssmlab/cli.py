"""Command-line interface: simulate, filter, gibbs, compare, doob."""
from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from . import diagnostics, kalman
from .harness import ConfigError, load_config, run_experiment
from .model import Ar1Params, LocalLevelParams, ObservationSeries, simulate_ar1, simulate_local_level


def _add_model_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--obs-var", type=float, default=1.0)
    parser.add_argument("--state-var", type=float, default=1.0)
    parser.add_argument("--prior-mean", type=float, default=0.0)
    parser.add_argument("--prior-var", type=float, default=1.0)


def _model_from_args(args) -> LocalLevelParams:
    return LocalLevelParams(
        obs_var=args.obs_var,
        state_var=args.state_var,
        prior_mean=args.prior_mean,
        prior_var=args.prior_var,
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ssmlab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="simulate a local-level or AR(1) series to CSV")
    _add_model_flags(p_sim)
    p_sim.add_argument("-T", "--horizon", type=int, required=True)
    p_sim.add_argument("--seed", type=int, default=None)
    p_sim.add_argument("--out", type=Path, default=None, help="output CSV (default: stdout)")
    p_sim.add_argument("--ar1-alpha", type=float, default=None,
                       help="simulate an AR(1) series with this coefficient instead")
    p_sim.add_argument("--ar1-start", type=float, default=0.0)
    p_sim.add_argument("--ar1-noise-var", type=float, default=1.0)

    p_filter = sub.add_parser("filter", help="run the engines of a config file")
    p_filter.add_argument("--config", type=Path, required=True)
    p_filter.add_argument("--seed", type=int, default=None,
                          help="unused override slot; seeds live in the config")

    p_gibbs = sub.add_parser("gibbs", help="run only the Gibbs engines of a config file")
    p_gibbs.add_argument("--config", type=Path, required=True)
    p_gibbs.add_argument("--seed", type=int, default=None)

    p_cmp = sub.add_parser("compare", help="deviation metrics between two trace CSVs")
    p_cmp.add_argument("trace_a", type=Path)
    p_cmp.add_argument("trace_b", type=Path)
    p_cmp.add_argument("--seed", type=int, default=None)

    p_doob = sub.add_parser("doob", help="prediction-error decomposition of a series CSV")
    p_doob.add_argument("series", type=Path)
    p_doob.add_argument("--predictor", choices=["kalman", "last_value"], default="kalman")
    _add_model_flags(p_doob)
    p_doob.add_argument("--baseline", type=float, default=0.0)
    p_doob.add_argument("--out", type=Path, default=None)
    p_doob.add_argument("--seed", type=int, default=None)
    return parser


def _read_trace_means(path: Path) -> np.ndarray:
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    if rows and "post_mean" in rows[0]:
        return np.array([float(r["post_mean"]) for r in rows])
    if rows and "mean" in rows[0]:
        return np.array([float(r["mean"]) for r in rows if int(r["t"]) > 0])
    raise ValueError(f"{path}: no post_mean or mean column found")


def _cmd_simulate(args) -> int:
    if args.seed is None:
        print("error: simulate is stochastic; --seed is required", file=sys.stderr)
        return 1
    if args.ar1_alpha is not None:
        series = simulate_ar1(
            Ar1Params(args.ar1_alpha, args.ar1_start, args.ar1_noise_var),
            args.horizon,
            args.seed,
        )
    else:
        series = simulate_local_level(_model_from_args(args), args.horizon, args.seed)
    text = series.to_csv()
    if args.out is None:
        sys.stdout.write(text)
    else:
        args.out.write_text(text)
    return 0


def _cmd_experiment(args, kinds=None) -> int:
    config = load_config(args.config)
    if kinds is not None:
        engines = [e for e in config.engines if e.kind in kinds]
        if not engines:
            print(f"error: config has no engine of kind {kinds}", file=sys.stderr)
            return 1
        config = type(config)(config.model, config.data, engines, config.output_dir,
                              config.emit_plots)
    result = run_experiment(config)
    for err in result.errors:
        print(f"engine error: {err}", file=sys.stderr)
    for path in result.files:
        print(path)
    return result.exit_status


def _cmd_compare(args) -> int:
    a = _read_trace_means(args.trace_a)
    b = _read_trace_means(args.trace_b)
    cmp = diagnostics.compare_to_oracle(a, b)
    print(f"rmse={cmp.rmse!r}")
    print(f"max_abs={cmp.max_abs!r}")
    return 0


def _cmd_doob(args) -> int:
    series = ObservationSeries.from_csv(args.series.read_text())
    if args.predictor == "kalman":
        trace = kalman.filter_series(_model_from_args(args), series)
        predictor = trace.predictive_obs_means
    else:
        y = series.observations
        predictor = np.concatenate([[args.baseline], y[:-1]])
    decomp = diagnostics.doob_decompose(series, predictor, baseline=args.baseline)
    text = decomp.to_csv()
    if args.out is None:
        sys.stdout.write(text)
    else:
        args.out.write_text(text)
    check = diagnostics.martingale_orthogonality_check(decomp)
    print(f"mean_increment={check.mean_increment!r} se={check.se_bounds[0]!r}", file=sys.stderr)
    print(f"lag1_cov={check.lag1_cov!r} se={check.se_bounds[1]!r}", file=sys.stderr)
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "simulate":
            return _cmd_simulate(args)
        if args.command == "filter":
            return _cmd_experiment(args)
        if args.command == "gibbs":
            return _cmd_experiment(args, kinds=("gibbs",))
        if args.command == "compare":
            return _cmd_compare(args)
        if args.command == "doob":
            return _cmd_doob(args)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    raise AssertionError("unreachable")


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry point: ``hybridgp {simulate,compare,sweep,forecast}``.

Exit status is 0 on success, 1 for usage or configuration errors and 2 for
failures while running.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from .errors import InputError
from .forecast import (
    ConfidenceSpec,
    ForecastConfig,
    HybridState,
    envelope_from_posterior,
    hybrid_forecast,
    kc_forecast,
    nar_forecast,
)
from .gp import GPDataset
from .harness import (
    CONTROLLERS,
    SimConfig,
    compare_controllers,
    controller_name,
    metrics_json,
    run_closed_loop,
    sweep_training_horizon,
    write_atomic,
)
from .scenario import KINDS, DisturbanceTrace

logger = logging.getLogger("hybridgp")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    """Reports usage errors with exit status 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _controller(value: str) -> str:
    try:
        return controller_name(value)
    except InputError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON file mirroring the simulation config")
    common.add_argument("--seed", type=int, help="random seed (default 0)")
    common.add_argument("--out", default=".", help="output directory (default: current)")
    common.add_argument("--scenario", type=str.upper, choices=KINDS,
                        help="disturbance profile (sn, ls, cm, rw)")
    common.add_argument("--controller", type=_controller,
                        help=f"one of {', '.join(CONTROLLERS)} (case-insensitive)")
    common.add_argument("--duration", type=float, help="simulated seconds")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress")

    parser = _Parser(prog="hybridgp", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sub.add_parser("simulate", parents=[common], help="run one closed-loop simulation")

    p = sub.add_parser("compare", parents=[common], help="compare controllers across seeds")
    p.add_argument("--controllers", nargs="+", type=_controller,
                   help="lineup to run (default: all seven)")
    p.add_argument("--n-seeds", type=int, default=1,
                   help="number of consecutive seeds starting at --seed")
    p.add_argument("--workers", type=int, default=1, help="parallel processes")

    p = sub.add_parser("sweep", parents=[common], help="scale the training horizon")
    p.add_argument("--factors", nargs="+", type=int, default=[1, 2, 3, 4])
    p.add_argument("--controllers", nargs="+", type=_controller,
                   help="controllers to sweep (default: Hybrid Hybridff)")
    p.add_argument("--n-seeds", type=int, default=1)
    p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("forecast", parents=[common],
                       help="forecast the flow following a recorded trace")
    p.add_argument("--input", required=True, help="CSV with columns t,true,measured")
    p.add_argument("--method", type=str.upper, choices=("KC", "NAR", "HYBRID"),
                   default="HYBRID")
    return parser


def load_config(args) -> SimConfig:
    """Merge the JSON config (if any) with command-line overrides."""
    data: dict = {}
    if args.config:
        try:
            with open(args.config) as fh:
                data = json.load(fh)
        except OSError as exc:
            raise InputError(f"cannot read config: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise InputError(f"config is not valid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise InputError("config must be a JSON object")
    scenario = dict(data.get("scenario", {}))
    if args.scenario:
        scenario["kind"] = args.scenario
    elif args.command == "sweep" and "kind" not in scenario:
        scenario["kind"] = "CM"
    if args.duration is not None:
        scenario["duration"] = args.duration
    data["scenario"] = scenario
    if args.controller:
        data["controller"] = args.controller
    if args.seed is not None:
        data["seed"] = args.seed
    return SimConfig.from_dict(data)


def _seeds(args, config):
    if args.n_seeds < 1:
        raise InputError("--n-seeds must be >= 1")
    return list(range(config.seed, config.seed + args.n_seeds))


def _write_json(path, obj):
    write_atomic(path, json.dumps(obj, indent=2) + "\n")


def cmd_simulate(args, config: SimConfig, out: str) -> None:
    record = run_closed_loop(config)
    record.to_csv(os.path.join(out, "run.csv"))
    write_atomic(os.path.join(out, "metrics.json"), metrics_json(record.metrics) + "\n")
    _write_json(os.path.join(out, "config.json"), config.to_dict())
    for t, msg in record.events:
        logger.warning("t=%g %s", t, msg)
    print(metrics_json(record.metrics))


def _runs_json(table):
    return {f"{k[0]}/seed{k[-1]}" if len(k) == 2 else f"{k[0]}/x{k[1]}/seed{k[2]}":
            (m.to_dict() if m is not None else None) for k, m in table.runs.items()}


def cmd_compare(args, config: SimConfig, out: str) -> None:
    controllers = args.controllers or list(CONTROLLERS)
    table = compare_controllers(config, controllers, _seeds(args, config), args.workers)
    table.to_csv(os.path.join(out, "table.csv"))
    _write_json(os.path.join(out, "metrics.json"), _runs_json(table))
    _report(table)


def cmd_sweep(args, config: SimConfig, out: str) -> None:
    controllers = args.controllers or ["Hybrid", "Hybridff"]
    table = sweep_training_horizon(config, args.factors, _seeds(args, config), controllers,
                                   args.workers)
    table.to_csv(os.path.join(out, "table.csv"))
    _write_json(os.path.join(out, "metrics.json"), _runs_json(table))
    _report(table)


def _report(table):
    for row in table.rows:
        label = row["controller"] + (f" x{row['factor']}" if "factor" in row else "")
        print(f"{label:14s} avg_objective={row['avg_objective_mean']:.4f} "
              f"normalized={row['normalized_objective']:.4f} {row['status']}")
    for key, err in table.errors.items():
        logger.error("%s: %s", key, err)
    if table.errors:
        raise RuntimeError(f"{len(table.errors)} run(s) failed")


def cmd_forecast(args, config: SimConfig, out: str) -> None:
    trace = DisturbanceTrace.from_csv(args.input)
    fc: ForecastConfig = config.forecast_config()
    history = GPDataset.from_series(trace.times, trace.measured_values)
    spec = ConfidenceSpec(fc.beta)
    if args.method == "KC":
        post, _ = kc_forecast(history, fc, seed=config.seed)
        env = envelope_from_posterior(post, spec, "KC")
    elif args.method == "NAR":
        post, _ = nar_forecast(history, fc, seed=config.seed)
        env = envelope_from_posterior(post, spec, "NAR")
    else:
        state = HybridState(config.delta1, config.delta2, rng_seed=config.seed)
        env, _, _ = hybrid_forecast(history, fc, state)
    lines = ["t,lower,mean,upper,variance,method"]
    for i in range(len(env)):
        vals = (env.step_times[i], env.lower[i], env.mean[i], env.upper[i], env.variance[i])
        lines.append(",".join(repr(float(v)) for v in vals) + f",{env.method}")
    text = "\n".join(lines) + "\n"
    write_atomic(os.path.join(out, "forecast.csv"), text)
    print(text, end="")


COMMANDS = {"simulate": cmd_simulate, "compare": cmd_compare, "sweep": cmd_sweep,
            "forecast": cmd_forecast}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = load_config(args)
        out = args.out
        os.makedirs(out, exist_ok=True)
    except (InputError, ValueError) as exc:
        print(f"hybridgp: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"hybridgp: cannot create output directory: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    try:
        COMMANDS[args.command](args, config, out)
    except InputError as exc:
        print(f"hybridgp: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:
        print(f"hybridgp: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry point.

Three subcommands: ``verify-convergence`` (the randomized commutation
harness), ``run-scenario`` (seeded fleet simulations from a config file),
and ``report`` (merge run directories into plot-ready CSVs). Exit codes are
stable: 0 success, 1 a property violation was detected, 2 usage or config
errors.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from .config import ConfigError, load_scenario_config
from .integrity import monte_carlo_convergence
from .localiser import LocaliserConfig
from .merging import Choice, ChoicePolicy, Commutation, CommutationPolicy
from .reporting import write_convergence_report, write_report, write_run
from .sim import run_scenario

EXIT_OK = 0
EXIT_VIOLATION = 1
EXIT_USAGE = 2


def _default_seed() -> int:
    env = os.environ.get("EXPMARKET_SEED")
    return int(env) if env else 0


def _usage_error(msg: str) -> SystemExit:
    print(f"error: {msg}", file=sys.stderr)
    return SystemExit(EXIT_USAGE)


def _parse_rates(text: str, robots: int, flag: str) -> list[float]:
    parts = [p for p in text.split(",") if p]
    try:
        values = [float(p) for p in parts]
    except ValueError:
        raise _usage_error(f"{flag}: expected a number or comma list") from None
    if len(values) == 1:
        return values * robots
    if len(values) != robots:
        raise _usage_error(f"{flag}: need 1 or {robots} values")
    return values


def cmd_verify_convergence(args) -> int:
    if args.robots < 2:
        raise _usage_error("--robots: need at least 2")
    if args.forays < 1 or args.trials < 1:
        raise _usage_error("--forays and --trials must be >= 1")
    mu = _parse_rates(args.mu, args.robots, "--mu")
    sigma = _parse_rates(args.sigma, args.robots, "--sigma")
    choice_kind = Choice(args.gamma)
    import random as _random

    choice = ChoicePolicy(choice_kind,
                          rng=_random.Random(args.seed) if choice_kind is Choice.COIN else None)
    policy = CommutationPolicy(
        Commutation(args.policy), choice, LocaliserConfig(tau_m=args.tau_m),
        allow_asymmetric=choice_kind in (Choice.LHS, Choice.COIN),
    )
    report = monte_carlo_convergence(args.robots, args.forays, args.trials,
                                     mu, sigma, policy, seed=args.seed,
                                     overlap=args.overlap)
    if args.out:
        write_convergence_report(Path(args.out), report, args.seed)
    print(f"R={report.R} K={report.K} M={report.M} policy={report.policy} "
          f"gamma={choice_kind.value} divergence_events={report.divergence_events}")
    return EXIT_OK if report.divergence_events == 0 else EXIT_VIOLATION


def cmd_run_scenario(args) -> int:
    try:
        config = load_scenario_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    trials = run_scenario(config, args.seed, args.trials, jobs=args.jobs)
    out_dir = Path(args.out)
    import json

    config_doc = json.loads(Path(args.config).read_text())
    write_run(out_dir, config_doc, args.seed, trials)
    total = sum(t.total_dropout() for t in trials)
    print(f"{len(trials)} trial(s) -> {out_dir}  strategy={trials[0].strategy} "
          f"total_dropout={total:g} m")
    return EXIT_OK


def cmd_report(args) -> int:
    run_dirs = [Path(args.input)] + [Path(p) for p in args.compare]
    for d in run_dirs:
        if not (d / "summary.json").exists():
            print(f"error: {d} is not a run directory (no summary.json)",
                  file=sys.stderr)
            return EXIT_USAGE
    try:
        write_report(Path(args.out), run_dirs)
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: malformed run data: {exc}", file=sys.stderr)
        return EXIT_USAGE
    print(f"report -> {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="expmarket",
        description="Experience-map version control, data market, and fleet simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    vc = sub.add_parser("verify-convergence",
                        help="randomized commutation verification")
    vc.add_argument("--robots", type=int, default=2)
    vc.add_argument("--forays", type=int, default=9)
    vc.add_argument("--trials", type=int, default=100)
    vc.add_argument("--mu", default="10", help="patch-size mean (scalar or comma list)")
    vc.add_argument("--sigma", default="2", help="patch-size stddev (scalar or comma list)")
    vc.add_argument("--policy", choices=[c.value for c in Commutation], default="union")
    vc.add_argument("--gamma", choices=[c.value for c in Choice], default="inliers",
                    help="choice policy for match merges (lhs/coin inject faults)")
    vc.add_argument("--overlap", type=float, default=0.0,
                    help="fraction of near-duplicate content across robots")
    vc.add_argument("--tau-m", type=float, default=0.12)
    vc.add_argument("--seed", type=int, default=_default_seed())
    vc.add_argument("--out", default=None, help="directory for report CSVs")
    vc.set_defaults(func=cmd_verify_convergence)

    rs = sub.add_parser("run-scenario", help="run a configured fleet scenario")
    rs.add_argument("--config", required=True)
    rs.add_argument("--seed", type=int, default=_default_seed())
    rs.add_argument("--trials", type=int, default=1)
    rs.add_argument("--jobs", type=int, default=1)
    rs.add_argument("--out", required=True)
    rs.set_defaults(func=cmd_run_scenario)

    rp = sub.add_parser("report", help="merge runs into plot-ready tables")
    rp.add_argument("--input", required=True)
    rp.add_argument("--compare", nargs="*", default=[])
    rp.add_argument("--out", required=True)
    rp.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SystemExit:
        raise
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

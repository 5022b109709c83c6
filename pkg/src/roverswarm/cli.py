"""Command-line entry point: ``roverswarm optimize | rollout | utopia | scenarios | validate``."""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
import time
from pathlib import Path

from .artifacts import (
    read_leader_headings_deg,
    read_weights,
    replay,
    write_bundle,
    write_series,
    write_utopia,
)
from .config import ScenarioConfig, builtin_scenarios, dump_scenario, load_scenario
from .errors import ConfigError, DimensionError, InfeasibleSolutionError, InvalidWeightsError, SwarmError
from .runner import compute_utopia, run_scenario

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_INFEASIBLE = 3
EXIT_BUDGET = 4
EXIT_SOLVER = 5

EXIT_CODES = {
    EXIT_OK: "converged and feasible",
    EXIT_INPUT: "unreadable or invalid input (scenario, override or data file)",
    EXIT_INFEASIBLE: "no solution passed the feasibility check",
    EXIT_BUDGET: "feasible solution, but the iteration or evaluation budget ran out before convergence",
    EXIT_SOLVER: "feasible solution, but the solver stopped early (line search or QP failure)",
}

_BUDGET_STATUSES = ("max_evals", "max_iters")

logger = logging.getLogger("roverswarm")


def _status_code(status: str) -> int:
    if status == "converged":
        return EXIT_OK
    if status in _BUDGET_STATUSES:
        return EXIT_BUDGET
    return EXIT_SOLVER


def _scenario(args) -> ScenarioConfig:
    cfg = load_scenario(args.scenario, args.set)
    if getattr(args, "seed", None) is not None:
        cfg = cfg.replace(solver=dataclasses.replace(cfg.solver, rng_seed=args.seed))
    return cfg


def _say(args, text: str) -> None:
    if not args.quiet:
        print(text)


def _infeasible_code(exc: InfeasibleSolutionError) -> int:
    """Budget exhaustion is the cause when every start ran out of budget."""
    starts = exc.violations.values() if isinstance(exc.violations, dict) else ()
    statuses = [s.get("status") for s in starts if isinstance(s, dict)]
    if statuses and all(s in _BUDGET_STATUSES for s in statuses):
        return EXIT_BUDGET
    return EXIT_INFEASIBLE


def cmd_optimize(args) -> int:
    cfg = _scenario(args)
    t0 = time.perf_counter()
    try:
        bundle = run_scenario(cfg)
    except InfeasibleSolutionError as exc:
        if exc.bundle is not None:
            write_bundle(exc.bundle, args.out)
            for name, value in sorted(exc.violations.items()):
                print(f"violation {name}: {value:.3e}", file=sys.stderr)
        print(f"infeasible: {exc}", file=sys.stderr)
        return _infeasible_code(exc)
    wall = time.perf_counter() - t0
    write_bundle(bundle, args.out, wall_time=wall if args.timing else None)
    b = bundle.breakdown
    rep = bundle.report
    _say(args, f"{cfg.name}: status={rep.status} f1={b['f1_exact']:.6g} f2={b['f2']:.6g} f={b['f']:.6g} "
               f"iterations={rep.iterations} func_evals={rep.func_evals} wall_time={wall:.1f}s")
    return _status_code(rep.status)


def cmd_rollout(args) -> int:
    cfg = _scenario(args)
    m = cfg.agent_count
    weights = read_weights(args.weights, m)
    headings = read_leader_headings_deg(args.headings, m)
    traj = replay(cfg, weights, headings)
    write_series(Path(args.out), traj, headings)
    end = traj.positions[-1, -1]
    _say(args, f"rollout: {traj.steps} steps, leader ends at ({end[0]:.6g}, {end[1]:.6g})")
    return EXIT_OK


def cmd_utopia(args) -> int:
    cfg = _scenario(args)
    try:
        utopia = compute_utopia(cfg)
    except InfeasibleSolutionError as exc:
        print(f"utopia solve failed: {exc}", file=sys.stderr)
        return _infeasible_code(exc)
    write_utopia(utopia, cfg, args.out)
    for notice in utopia.notices:
        _say(args, f"notice: {notice}")
    exact = "skipped" if utopia.f_min1_exact is None else f"{utopia.f_min1_exact:.6g}"
    _say(args, f"{cfg.name}: f_min1={utopia.points.f_min1:.6g} (exact {exact}) f_min2={utopia.points.f_min2:.6g} "
               f"metropolis_f2={utopia.metropolis_f2:.6g}")
    return EXIT_OK


def cmd_scenarios(args) -> int:
    scenarios = builtin_scenarios()
    if args.dump:
        if args.dump not in scenarios:
            print(f"unknown scenario {args.dump!r}; choose from {', '.join(scenarios)}", file=sys.stderr)
            return EXIT_INPUT
        print(dump_scenario(scenarios[args.dump]), end="")
        return EXIT_OK
    for name, sc in scenarios.items():
        print(f"{name}: T={sc.steps} a1={sc.a1} a2={sc.a2} min_tol={sc.min_tol} max_tol={sc.max_tol} "
              f"target=({sc.target[0]:g}, {sc.target[1]:g})")
    return EXIT_OK


def cmd_validate(args) -> int:
    cfg = _scenario(args)
    _say(args, f"{args.scenario}: ok ({cfg.name}, T={cfg.steps}, {cfg.agent_count} agents)")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    epilog = "exit codes:\n" + "\n".join(f"  {code}  {text}" for code, text in EXIT_CODES.items())
    parser = argparse.ArgumentParser(prog="roverswarm", description="Leader-follower rover swarm optimizer",
                                     epilog=epilog, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--quiet", action="store_true", help="suppress the result line")
    parser.add_argument("--verbose", action="store_true", help="log solver progress")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out=True):
        p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                       help="override a scenario field (repeatable)")
        p.add_argument("--seed", type=int, default=None, help="multistart seed")
        p.add_argument("--quiet", action="store_true", default=argparse.SUPPRESS, help="suppress the result line")
        if out:
            p.add_argument("--out", default="results", help="output directory (default: results)")

    p = sub.add_parser("optimize", help="utopia points, multistart joint solve and artifacts")
    p.add_argument("scenario", help="built-in name (sim1, sim2, sim3) or scenario file")
    p.add_argument("--timing", action="store_true", help="also write timing.json with the wall time")
    common(p)
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("rollout", help="simulate given weights and leader headings")
    p.add_argument("weights", help="CSV with m-1 or m rows of m weights")
    p.add_argument("headings", help="leader headings in degrees: a heading series CSV or one value per line")
    p.add_argument("--scenario", default="sim1", help="formation and step length source (default: sim1)")
    common(p)
    p.set_defaults(func=cmd_rollout)

    p = sub.add_parser("utopia", help="compute both utopia points")
    p.add_argument("scenario")
    common(p)
    p.set_defaults(func=cmd_utopia)

    p = sub.add_parser("scenarios", help="list built-in scenarios")
    p.add_argument("--dump", metavar="NAME", help="print NAME as a scenario file")
    p.set_defaults(func=cmd_scenarios)

    p = sub.add_parser("validate", help="check a scenario file and overrides")
    p.add_argument("scenario")
    common(p, out=False)
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        key = f" [{exc.key}]" if exc.key else ""
        print(f"input error{key}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (InvalidWeightsError, DimensionError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except SwarmError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())

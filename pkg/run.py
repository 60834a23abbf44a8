#!/usr/bin/env python3
"""
Command-line runner for the pursuit game toolkit.

Subcommands:
    value     compute the game value of a scenario
    simulate  play one game and write trajectories and a summary
    certify   bracket the value between random evaders and adversarial pursuers
    example   reproduce the worked example over a sweep of truncation dimensions

A scenario argument is a JSON file or one of the built-in presets
(example, example-disjoint, example-integral, example-geometric).
Exit codes: 0 success, 2 invalid input, 3 strategy hypothesis violated.
"""

import argparse
import logging
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from typing import List, Optional

from modules.game_model import (
    PRESETS, ConstraintKind, ScenarioError, capture_halfspace, check_assumption_a, example_scenario,
    resolve_scenario,
)
from modules.game_value import (
    GameValueError, gamma_analytic_example, gamma_by_group, gamma_optimize, gamma_oracle,
    locate_halfspace, richardson_limit,
)
from modules.hilbert_geometry import GeometryError, halfspace_contains
from modules.report_generator import ExampleRow, RunReport, generator
from modules.simulator import (
    PiecewiseConstantControl, PursuerStrategy, SimConfig, SimulationError, random_admissible_evader,
    random_admissible_pursuer, run_game, rush_controls,
)
from modules.strategies import StrategyHypothesisError, check_theorem_hypotheses, evader_guaranteed_plan
from utils.config import config
from utils.helpers import get_file_hash, parse_int_list

logger = logging.getLogger("run")

# Value quoted for the worked example, per group selection.
STATED_EXAMPLE_VALUE = {"both": 0.7, "integral": 0.7, "geometric": 1.0}
DEFAULT_EXAMPLE_DIMS = "2,4,16,64,256"


def status(args, message: str) -> None:
    """Human status line; kept off stdout when JSON is requested."""
    print(message, file=sys.stderr if getattr(args, "json", False) else sys.stdout)


def _preset_groups(reference: str) -> Optional[str]:
    """Group selection of a shared-axis preset, None for files and other placements."""
    if reference in PRESETS and PRESETS[reference][0] == "shared":
        return PRESETS[reference][1]
    return None


def _assumption(args, s, report: RunReport):
    cert = check_assumption_a(s, seed=args.seed)
    report.assumption_a = generator.assumption_summary(cert)
    if cert is None:
        status(args, "⚠️  Assumption (A) not found: the value is computed but not certified")
    elif cert.marginal:
        status(args, f"⚠️  Assumption (A) holds only marginally (slack {cert.min_slack:.2e})")
    return cert


def cmd_value(args) -> RunReport:
    s = resolve_scenario(args.scenario, args.dimension)
    report = generator.new_report("value", s, args.seed)
    _assumption(args, s, report)

    if args.method == "oracle":
        gv = gamma_oracle(s, grid_per_axis=args.grid, seed=args.seed)
        optimized = gamma_optimize(s, starts=args.starts, iters=args.iters, seed=args.seed).gamma
        report.extras["optimizer_gamma"] = optimized
        report.verdicts.append(generator.verdict(
            "oracle bracket contains the optimizer value",
            min(optimized - gv.lower + config.VALUE_TOL, gv.upper - optimized),
        ))
    else:
        gv = gamma_optimize(s, starts=args.starts, iters=args.iters, seed=args.seed)
    report.value = generator.value_summary(s, gv)
    report.verdicts.append(generator.witness_verdict(s, gv))

    if args.by_group:
        for kind, group_value in gamma_by_group(s, seed=args.seed).items():
            report.extras[f"gamma_{kind}"] = None if group_value is None else group_value.gamma

    groups = _preset_groups(args.scenario)
    if groups is not None:
        analytic = gamma_analytic_example(s.dimension, groups)
        report.extras["analytic_gamma"] = analytic
        sweep = sorted({max(1, s.dimension // 16), max(1, s.dimension // 4), s.dimension})
        report.extras["analytic_limit_estimate"] = richardson_limit(
            sweep, [gamma_analytic_example(d, groups) for d in sweep])
        report.extras["analytic_limit"] = gamma_analytic_example(math.inf, groups)
        report.extras["stated_value"] = STATED_EXAMPLE_VALUE[groups]
        report.verdicts.append(generator.verdict(
            "value matches the closed form", config.VALUE_TOL - abs(gv.gamma - analytic)))
    status(args, f"✅ gamma = {gv.gamma:.6f} ({gv.method})")
    return report


def _audit_slack(audit, kind: ConstraintKind) -> float:
    tol = config.INTEGRAL_BUDGET_TOL if kind is ConstraintKind.INTEGRAL else config.GEOMETRIC_BUDGET_TOL
    return tol - audit.margin


def _simulation_config(args) -> SimConfig:
    return SimConfig(steps=args.steps, dt=args.dt, epsilon=args.epsilon, seed=args.seed)


def cmd_simulate(args) -> RunReport:
    s = resolve_scenario(args.scenario, args.dimension)
    report = generator.new_report("simulate", s, args.seed)
    _assumption(args, s, report)
    cfg = _simulation_config(args)

    gv = None
    if args.gamma is not None:
        if args.gamma < 0:
            raise SimulationError(f"--gamma must be >= 0, got {args.gamma}")
        gamma = args.gamma
        report.extras["gamma_override"] = gamma
    else:
        gv = gamma_optimize(s, seed=args.seed)
        report.value = generator.value_summary(s, gv)
        gamma = gv.gamma

    plan = None
    if args.evader == "straight":
        gv = gv or gamma_optimize(s, seed=args.seed)
        plan = evader_guaranteed_plan(s, gv, seed=args.seed)
        evader = plan
        report.extras["evader_target_guarantee"] = plan.guarantee
    elif args.evader == "random":
        evader = random_admissible_evader(s, args.pieces, args.seed, rate_bounded=args.rate_bounded)
    else:
        if not args.evader_file:
            raise ScenarioError("--evader file needs --evader-file PATH")
        evader = PiecewiseConstantControl.load(args.evader_file, s.theta, s.dimension)
        report.extras["evader_file_sha256"] = get_file_hash(args.evader_file)

    strategy = PursuerStrategy(args.pursuer_strategy)
    hypotheses = None
    if strategy is PursuerStrategy.THEOREM:
        hypotheses = check_theorem_hypotheses(s, gamma, cfg.epsilon, args.seed)
        for line in hypotheses.violations:
            status(args, f"⚠️  frozen: {line}")
    result = run_game(s, strategy, evader, cfg, gamma=gamma, hypotheses=hypotheses)
    report.simulations.append(generator.simulation_summary(result, label=args.evader))

    report.verdicts.append(generator.verdict(
        "evader control within its integral budget", _audit_slack(result.evader_audit, ConstraintKind.INTEGRAL)))
    slacks = {i: _audit_slack(a, s.pursuer(i).kind) for i, a in result.pursuer_audits.items()}
    tightest = min(slacks, key=slacks.get)
    report.verdicts.append(generator.verdict(
        "pursuer controls within their budgets", slacks[tightest], f"tightest: pursuer {tightest}"))
    terminal = result.evader_path[-1]
    if strategy is PursuerStrategy.THEOREM:
        report.verdicts.append(generator.verdict(
            "payoff <= gamma + envelope", gamma + config.UPPER_ENVELOPE - result.payoff))
        report.extras["covering_pursuer"] = locate_halfspace(s, gamma, 0.0, terminal)
    else:
        capturing = [p.id for p in s.pursuers
                     if halfspace_contains(capture_halfspace(p.position(), s.y0, p.rho, s.sigma, s.theta, p.kind),
                                           terminal)]
        report.extras["capture_halfspace_pursuers"] = capturing
        if capturing:
            report.verdicts.append(generator.verdict(
                "capture when the evader ends in a capture half-space", config.CAPTURE_TOL - result.payoff))
    if plan is not None:
        report.verdicts.append(generator.verdict(
            "payoff >= evader guarantee", result.payoff - plan.guarantee + config.LOWER_SLACK))

    out_dir = args.out_dir or config.OUTPUT_DIR
    stem = f"{args.command}_{s.digest[:8]}_{args.seed}"
    report.extras["trajectories"] = generator.write_trajectories(result, config.get_output_path(f"{stem}_trajectories.csv", out_dir))
    report.extras["summary"] = config.get_output_path(f"{stem}_report.json", out_dir)
    generator.write_json(report, report.extras["summary"])
    status(args, f"✅ payoff {result.payoff:.6f} against gamma {gamma:.6f}; artifacts in {out_dir}")
    return report


def _certify_one(s, gamma, plan, hypotheses, cfg, pieces, seed, index):
    upper = run_game(s, PursuerStrategy.THEOREM,
                     random_admissible_evader(s, pieces, seed + index), cfg, gamma=gamma, hypotheses=hypotheses)
    if index == 0:
        pursuers = rush_controls(s, plan.target)
    else:
        pursuers = {p.id: random_admissible_pursuer(p, s.theta, pieces, seed + 7919 * index + n)
                    for n, p in enumerate(s.pursuers)}
    lower = run_game(s, pursuers, plan, cfg)
    return upper, lower


def _certify_scenario(args, s, report: RunReport, label: str) -> None:
    cfg = _simulation_config(args)
    gv = gamma_optimize(s, seed=args.seed)
    report.extras[f"gamma{label}"] = gv.gamma
    if args.trials == 0:
        return
    hypotheses = check_theorem_hypotheses(s, gv.gamma, cfg.epsilon, args.seed)
    plan = evader_guaranteed_plan(s, gv, seed=args.seed)

    with ThreadPoolExecutor(max_workers=config.MAX_WORKERS) as pool:
        outcomes = list(pool.map(
            lambda i: _certify_one(s, gv.gamma, plan, hypotheses, cfg, args.pieces, args.seed, i),
            range(args.trials),
        ))

    uppers = [u.payoff for u, _ in outcomes]
    lowers = [l.payoff for _, l in outcomes]
    for i, (upper, lower) in enumerate(outcomes):
        report.simulations.append(generator.simulation_summary(upper, label=f"upper{label} trial {i}"))
        report.simulations.append(generator.simulation_summary(
            lower, label=f"lower{label} trial {i} ({'rush' if i == 0 else 'random'})"))
    report.extras[f"sandwich{label}"] = {"lower_min": min(lowers), "upper_max": max(uppers)}
    report.verdicts.append(generator.verdict(
        f"upper side{label}: every payoff <= gamma + {config.UPPER_ENVELOPE}",
        gv.gamma + config.UPPER_ENVELOPE - max(uppers)))
    report.verdicts.append(generator.verdict(
        f"lower side{label}: every payoff >= gamma - {config.LOWER_SLACK}",
        min(lowers) - gv.gamma + config.LOWER_SLACK))
    admissible = all(u.admissible and l.admissible for u, l in outcomes)
    report.verdicts.append(generator.verdict(
        f"all controls admissible{label}", 0.0 if admissible else -1.0))


def cmd_certify(args) -> RunReport:
    if args.trials < 0:
        raise SimulationError(f"--trials must be >= 0, got {args.trials}")
    if args.dims and args.scenario not in PRESETS:
        logger.warning("--dims only applies to presets; certifying the file as given")
    if args.dims and args.scenario in PRESETS:
        placement, groups = PRESETS[args.scenario]
        report = generator.new_report("certify", seed=args.seed)
        for dim in parse_int_list(args.dims):
            _certify_scenario(args, example_scenario(dim, placement, groups), report, f" d={dim}")
    else:
        s = resolve_scenario(args.scenario, args.dimension)
        report = generator.new_report("certify", s, args.seed)
        _assumption(args, s, report)
        _certify_scenario(args, s, report, "")
    mark = "✅" if report.passed else "❌"
    status(args, f"{mark} certification over {args.trials} trials")
    return report


def cmd_example(args) -> RunReport:
    dims = parse_int_list(args.dims)
    report = generator.new_report("example", seed=args.seed)
    shared = args.placement == "shared"
    for dim in dims:
        s = example_scenario(dim, args.placement, args.groups)
        gv = gamma_optimize(s, seed=args.seed)
        row = ExampleRow(dimension=dim, gamma=gv.gamma)
        if shared:
            row.analytic = gamma_analytic_example(dim, args.groups)
            row.error = abs(gv.gamma - row.analytic)
        if dim <= 3:
            oracle = gamma_oracle(s, seed=args.seed)
            row.oracle_lower, row.oracle_upper = oracle.lower, oracle.upper
        report.example.append(row)

    values = [row.gamma for row in report.example]
    limit = richardson_limit(dims, values)
    report.extras["limit_estimate"] = limit
    report.extras["stated_value"] = STATED_EXAMPLE_VALUE[args.groups]
    if shared:
        exact_limit = gamma_analytic_example(math.inf, args.groups)
        report.extras["analytic_limit"] = exact_limit
        report.verdicts.append(generator.verdict(
            "optimizer matches the closed form", config.VALUE_TOL - max(row.error for row in report.example)))
        if limit is not None:
            report.verdicts.append(generator.verdict(
                "extrapolated limit matches the closed-form limit", 5e-3 - abs(limit - exact_limit)))
    for row in report.example:
        if row.oracle_lower is not None:
            report.verdicts.append(generator.verdict(
                f"d={row.dimension}: optimizer inside the oracle bracket",
                min(row.gamma - row.oracle_lower + config.VALUE_TOL, row.oracle_upper - row.gamma)))
    ordered = sorted(report.example, key=lambda r: r.dimension)
    if len(ordered) > 1:
        steps = [a.gamma - b.gamma for a, b in zip(ordered, ordered[1:])]
        report.verdicts.append(generator.verdict("value strictly decreasing in d", min(steps)))
    status(args, f"✅ example over d = {', '.join(str(d) for d in dims)}")
    return report


COMMANDS = {
    "value": cmd_value,
    "simulate": cmd_simulate,
    "certify": cmd_certify,
    "example": cmd_example,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Pursuit game toolkit: value, simulation and certification")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, scenario=True):
        if scenario:
            p.add_argument("scenario", help="scenario JSON file or preset name (" + ", ".join(PRESETS) + ")")
            p.add_argument("--dimension", type=int, default=None, help="truncation dimension for presets")
        p.add_argument("--seed", type=int, default=config.DEFAULT_SEED, help="seed (default: PURSUIT_SEED)")
        p.add_argument("--json", action="store_true", help="print the report as JSON")

    value = sub.add_parser("value", help="compute the game value")
    common(value)
    value.add_argument("--method", choices=["optimizer", "oracle"], default="optimizer")
    value.add_argument("--grid", type=int, default=config.ORACLE_GRID, help="oracle grid points per axis")
    value.add_argument("--starts", type=int, default=config.OPTIMIZER_STARTS)
    value.add_argument("--iters", type=int, default=config.OPTIMIZER_ITERS)
    value.add_argument("--by-group", action="store_true", help="also report integral-only and geometric-only values")

    def simulation_flags(p):
        p.add_argument("--steps", type=int, default=config.DEFAULT_STEPS)
        p.add_argument("--dt", type=float, default=None, help="step length (shortened to divide theta)")
        p.add_argument("--epsilon", type=float, default=config.DEFAULT_EPSILON)
        p.add_argument("--pieces", type=int, default=8, help="pieces of random controls")

    simulate = sub.add_parser("simulate", help="play one game")
    common(simulate)
    simulation_flags(simulate)
    simulate.add_argument("--pursuer-strategy", choices=[m.value for m in PursuerStrategy], default="theorem")
    simulate.add_argument("--evader", choices=["straight", "random", "file"], default="straight")
    simulate.add_argument("--evader-file", default=None, help="control file for --evader file (.json or .csv)")
    simulate.add_argument("--rate-bounded", action="store_true", help="random evader keeps ||v|| <= sigma")
    simulate.add_argument("--gamma", type=float, default=None, help="override the computed value")
    simulate.add_argument("--out-dir", default=None, help="artifact directory (default: PURSUIT_OUTPUT_DIR)")

    certify = sub.add_parser("certify", help="bracket the value by simulation")
    common(certify)
    simulation_flags(certify)
    certify.add_argument("--trials", type=int, default=50)
    certify.add_argument("--dims", default=None, help="comma separated dimensions (presets only)")

    example = sub.add_parser("example", help="reproduce the worked example")
    common(example, scenario=False)
    example.add_argument("--dims", default=DEFAULT_EXAMPLE_DIMS)
    example.add_argument("--groups", choices=["both", "integral", "geometric"], default="both")
    example.add_argument("--placement", choices=["shared", "disjoint"], default="shared")
    return parser


def main(argv: List[str] = None) -> int:
    """Run one subcommand and return its exit code."""
    parser = build_parser()
    args = parser.parse_args(argv)

    try:
        config.validate()
    except ValueError as e:
        print(f"❌ Configuration error: {e}", file=sys.stderr)
        return 2
    logging.basicConfig(level=config.LOG_LEVEL, format="%(levelname)s %(name)s: %(message)s")

    try:
        report = COMMANDS[args.command](args)
    except StrategyHypothesisError as e:
        print(f"❌ Strategy hypothesis violated: {e}", file=sys.stderr)
        return 3
    except (ScenarioError, GameValueError, SimulationError, GeometryError) as e:
        print(f"❌ Invalid input: {e}", file=sys.stderr)
        return 2
    except ValueError as e:
        # malformed flag values such as --dims 2,x
        print(f"❌ Invalid input: {e}", file=sys.stderr)
        return 2

    if args.json:
        print(generator.to_json(report))
    else:
        print(generator.render_text(report), end="")
    return 0


if __name__ == "__main__":
    sys.exit(main())

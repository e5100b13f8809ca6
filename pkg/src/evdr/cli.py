"""Command-line entry point: ``evdr gen-users | simulate | optimize``.

Exit codes: 0 success, 2 usage or validation error, 3 external-service failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from evdr.agents import DecisionPolicy, LLMPolicy, RulePolicy, WindowTooSmall
from evdr.domain import (
    FixedLoadProfile,
    PolicyKind,
    ScenarioConfig,
    TimeGrid,
    ValidationError,
    WholesaleSchedule,
    dumps_scenario,
    load_scenario,
)
from evdr.gateway import FIXTURE_MODES, GatewayError, LLMGateway
from evdr.optimizer import BudgetExceeded, SwarmConfig, grid_search, pso_optimize
from evdr.profilegen import (
    DEFAULT_PRICE_BOUNDS,
    DEFAULT_USERS,
    build_scenario,
    generate_llm_users,
    substream_seed,
)
from evdr.simulation import demand_csv, make_objective, result_json, simulate_demand

logger = logging.getLogger("evdr")

EXIT_USAGE = 2
EXIT_SERVICE = 3


class UsageError(Exception):
    pass


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--jobs", type=int, default=os.cpu_count() or 1, help="worker threads (default: cores)")
    p.add_argument("--fixtures", choices=FIXTURE_MODES, default="replay", help="LLM fixture mode")
    p.add_argument("--fixture-dir", default="fixtures", help="LLM fixture store directory")
    p.add_argument("--strict", action="store_true", help="fail with exit 3 on LLM gateway errors")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="evdr", description="EV demand-response simulation and price optimization")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-users", help="generate a scenario file with a user population")
    g.add_argument("--n", type=int, default=DEFAULT_USERS, help="number of users")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True, help="scenario JSON to write")
    g.add_argument("--config", help="JSON with grid/price_bounds/wholesale/fixed_load/temperature overrides")
    g.add_argument("--llm", action="store_true", help="generate personas through the LLM gateway")
    g.add_argument("--policy", choices=[k.value for k in PolicyKind], default="rule")
    _add_common(g)

    s = sub.add_parser("simulate", help="simulate user decisions at a fixed price schedule")
    s.add_argument("--config", required=True, help="scenario JSON")
    s.add_argument("--prices", required=True, help="comma-separated prices, or a single flat price")
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--policy", choices=[k.value for k in PolicyKind])
    _add_common(s)

    o = sub.add_parser("optimize", help="optimize the retail price schedule with PSO")
    o.add_argument("--config", required=True, help="scenario JSON")
    o.add_argument("--out", required=True, help="output directory")
    o.add_argument("--seed", type=int, help="master seed for the swarm (default: scenario seed)")
    o.add_argument("--policy", choices=[k.value for k in PolicyKind])
    o.add_argument("--iterations", type=int, default=SwarmConfig.iterations)
    o.add_argument("--swarm-size", type=int, default=SwarmConfig.swarm_size)
    o.add_argument("--oracle", choices=["none", "grid"], default="none", help="also run an exhaustive grid search")
    o.add_argument("--steps", type=int, default=11, help="grid-search points per price dimension")
    _add_common(o)
    return parser


def _gateway(args) -> LLMGateway:
    return LLMGateway.from_env(
        mode=args.fixtures,
        fixture_dir=args.fixture_dir if args.fixtures != "off" else None,
        max_concurrency=max(1, args.jobs),
    )


def _policy(args, scenario: ScenarioConfig) -> DecisionPolicy:
    kind = PolicyKind(args.policy) if args.policy else scenario.policy_kind
    if kind is PolicyKind.LLM:
        return LLMPolicy(_gateway(args), strict=args.strict)
    return RulePolicy()


def _read_overrides(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        raise UsageError(f"cannot read --config {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise UsageError("--config must hold a JSON object")
    return doc


def _unwrap(value, key):
    return value[key] if isinstance(value, dict) else value


def cmd_gen_users(args) -> int:
    if args.n < 0:
        raise UsageError("--n must be >= 0")
    over = _read_overrides(args.config)
    try:
        grid = TimeGrid(**over["grid"]) if "grid" in over else TimeGrid()
    except TypeError as exc:
        raise UsageError(f"bad grid in --config: {exc}") from exc
    bounds = tuple(over.get("price_bounds", DEFAULT_PRICE_BOUNDS))
    if len(bounds) != 2:
        raise UsageError("price_bounds must be [lower, upper]")
    errors = grid.violations()
    if errors:
        raise ValidationError(errors)
    kwargs = dict(
        seed=args.seed,
        grid=grid,
        bounds=bounds,
        temperature=float(over.get("temperature", 15.0)),
        policy_kind=args.policy,
    )
    if "wholesale" in over:
        kwargs["wholesale"] = WholesaleSchedule(tuple(_unwrap(over["wholesale"], "prices")))
    if "fixed_load" in over:
        kwargs["fixed_load"] = FixedLoadProfile(tuple(_unwrap(over["fixed_load"], "load")))
    if args.llm:
        pop = generate_llm_users(
            args.n, _gateway(args), substream_seed(args.seed, "population"),
            grid=grid, bounds=bounds, strict=args.strict,
        )
        print(
            f"personas: {len(pop.users)} users, {pop.repaired} repaired, {pop.dropped} dropped, "
            f"{pop.topped_up} synthetic top-ups"
        )
        scenario = build_scenario(pop.users, **kwargs)
    else:
        scenario = build_scenario(n=args.n, **kwargs)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(dumps_scenario(scenario), encoding="utf-8")
    print(f"wrote {scenario.n_users} users to {out}")
    return 0


def _parse_prices(text: str, scenario: ScenarioConfig):
    try:
        values = [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise UsageError(f"--prices must be numbers: {exc}") from exc
    h = scenario.grid.slot_count
    if len(values) == 1:
        values *= h
    if len(values) != h:
        raise UsageError(f"--prices needs 1 or {h} values, got {len(values)}")
    lo, hi = scenario.price_bounds
    bad = [p for p in values if not lo <= p <= hi]
    if bad:
        raise UsageError(f"prices {bad} violate the price constraint {lo} <= price <= {hi}")
    return scenario.schedule(values)


def _write_outputs(out: Path, files: dict[str, str]) -> None:
    out.mkdir(parents=True, exist_ok=True)
    for name, text in files.items():
        (out / name).write_text(text, encoding="utf-8")


def cmd_simulate(args) -> int:
    scenario = _load(args.config)
    schedule = _parse_prices(args.prices, scenario)
    policy = _policy(args, scenario)
    result = simulate_demand(schedule, scenario, policy, jobs=args.jobs)
    _write_outputs(
        Path(args.out),
        {
            "demand.csv": demand_csv(schedule, result, scenario),
            "decisions.json": result_json(schedule, result, scenario),
        },
    )
    print(f"profit: {result.profit:.4f} $ (revenue {result.revenue:.4f}, wholesale cost {result.wholesale_cost:.4f})")
    if result.fallback_count:
        print(f"LLM fallbacks: {result.fallback_count}")
    return 0


def cmd_optimize(args) -> int:
    scenario = _load(args.config)
    policy = _policy(args, scenario)
    seed = scenario.seed if args.seed is None else args.seed
    try:
        config = SwarmConfig(
            swarm_size=args.swarm_size, iterations=args.iterations, seed=substream_seed(seed, "swarm")
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    objective = make_objective(scenario, policy, jobs=args.jobs)
    h = scenario.grid.slot_count
    run = pso_optimize(objective, scenario.price_bounds, h, config)
    report = {
        "best_prices": list(run.best_position),
        "best_profit": run.best_profit,
        "evaluations": run.evaluations,
        "iterations": len(run.history),
        "swarm": {
            "swarm_size": config.swarm_size,
            "iterations": config.iterations,
            "inertia": config.inertia,
            "cognitive": config.cognitive,
            "social": config.social,
            "velocity_clamp": config.velocity_clamp,
            "seed": config.seed,
        },
    }
    if args.oracle == "grid":
        try:
            g = grid_search(objective, scenario.price_bounds, h, args.steps)
        except (BudgetExceeded, ValueError) as exc:
            raise UsageError(str(exc)) from exc
        report["oracle"] = {
            "method": "grid",
            "steps_per_dim": args.steps,
            "best_prices": list(g.best_position),
            "best_profit": g.best_profit,
            "evaluations": g.evaluations,
            "gap": run.best_profit - g.best_profit,
            "relative_gap": (run.best_profit - g.best_profit) / abs(g.best_profit) if g.best_profit else 0.0,
        }
    schedule = run.best_schedule
    result = simulate_demand(schedule, scenario, policy, jobs=args.jobs)
    _write_outputs(
        Path(args.out),
        {
            "best_schedule.json": json.dumps(report, indent=2) + "\n",
            "history.csv": run.history_csv(),
            "demand.csv": demand_csv(schedule, result, scenario),
            "decisions.json": result_json(schedule, result, scenario),
        },
    )
    print(f"best profit: {run.best_profit:.4f} $ at prices {[round(p, 4) for p in run.best_position]}")
    if "oracle" in report:
        o = report["oracle"]
        print(f"grid oracle: {o['best_profit']:.4f} $ (gap {o['gap']:+.4f})")
    return 0


def _load(path: str) -> ScenarioConfig:
    try:
        return load_scenario(path)
    except OSError as exc:
        raise UsageError(f"cannot read scenario {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise UsageError(f"scenario {path} is not valid JSON: {exc}") from exc


COMMANDS = {"gen-users": cmd_gen_users, "simulate": cmd_simulate, "optimize": cmd_optimize}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    if args.jobs < 1:
        parser.error("--jobs must be >= 1")
    try:
        return COMMANDS[args.command](args)
    except (UsageError, ValidationError, WindowTooSmall) as exc:
        print(f"evdr: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except GatewayError as exc:
        print(f"evdr: LLM gateway failure: {exc}", file=sys.stderr)
        return EXIT_SERVICE


if __name__ == "__main__":
    sys.exit(main())

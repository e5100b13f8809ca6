"""Lower-layer evaluation: decisions, aggregate demand and aggregator profit."""

from __future__ import annotations

import csv
import io
import json
import math
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from evdr.agents import FALLBACK_MARKER, DecisionPolicy, RulePolicy
from evdr.domain import (
    ChargingDecision,
    DemandCurve,
    FixedLoadProfile,
    PriceSchedule,
    ScenarioConfig,
    TimeGrid,
    WholesaleSchedule,
)


class LengthMismatch(ValueError):
    pass


@dataclass(frozen=True)
class SimulationResult:
    decisions: tuple[ChargingDecision, ...]
    demand: DemandCurve
    profit: float
    revenue: float
    wholesale_cost: float
    fallback_count: int = 0

    def __post_init__(self) -> None:
        if not math.isclose(self.profit, self.revenue - self.wholesale_cost, rel_tol=1e-12, abs_tol=1e-9):
            raise ValueError("profit must equal revenue - wholesale_cost")


def aggregate_demand(rows: Sequence[Sequence[float]], slot_count: int) -> DemandCurve:
    """Per-slot sum of user power, correctly rounded (``math.fsum``)."""
    return DemandCurve(tuple(math.fsum(row[t] for row in rows) for t in range(slot_count)))


def _served_load(demand: DemandCurve, fixed_load: FixedLoadProfile, grid: TimeGrid) -> list[float]:
    h = grid.slot_count
    if len(demand.total) != h or len(fixed_load.load) != h:
        raise LengthMismatch(f"demand/fixed load lengths must equal slot_count {h}")
    return [demand.total[t] + fixed_load.load[t] for t in range(h)]


def aggregator_profit(
    schedule: PriceSchedule,
    demand: DemandCurve,
    fixed_load: FixedLoadProfile,
    wholesale: WholesaleSchedule,
    grid: TimeGrid,
) -> float:
    """Retail margin earned on EV plus fixed load over the window, in $.

    ``sum_t (P_ev(t) + P_fixed(t)) * (price(t) - wholesale(t)) * slot_hours``
    """
    load = _served_load(demand, fixed_load, grid)
    if len(schedule.prices) != grid.slot_count or len(wholesale.prices) != grid.slot_count:
        raise LengthMismatch(f"price vectors must have slot_count {grid.slot_count} entries")
    dt = grid.slot_hours
    return math.fsum(
        load[t] * (schedule.prices[t] - wholesale.prices[t]) * dt for t in range(grid.slot_count)
    )


def _price_sums(schedule: PriceSchedule, demand: DemandCurve, scenario: ScenarioConfig) -> tuple[float, float]:
    load = _served_load(demand, scenario.fixed_load, scenario.grid)
    dt = scenario.grid.slot_hours
    revenue = math.fsum(load[t] * schedule.prices[t] * dt for t in range(len(load)))
    cost = math.fsum(load[t] * scenario.wholesale.prices[t] * dt for t in range(len(load)))
    return revenue, cost


def simulate_demand(
    schedule: PriceSchedule,
    scenario: ScenarioConfig,
    policy: DecisionPolicy,
    jobs: int = 1,
) -> SimulationResult:
    """Run ``policy`` for every user at ``schedule`` and price the outcome.

    Decisions may be computed on ``jobs`` threads; they are always returned in
    user order, and the aggregation does not depend on completion order.
    """
    schedule.check_length(scenario.grid)
    env = scenario.environment()

    def one(user):
        profile, vehicle = user
        return policy.decide(profile, vehicle, env, schedule)

    if jobs > 1 and scenario.n_users > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            decisions = tuple(pool.map(one, scenario.users))
    else:
        decisions = tuple(one(u) for u in scenario.users)
    demand = aggregate_demand([d.power for d in decisions], scenario.grid.slot_count)
    profit = aggregator_profit(schedule, demand, scenario.fixed_load, scenario.wholesale, scenario.grid)
    revenue, cost = _price_sums(schedule, demand, scenario)
    fallbacks = sum(1 for d in decisions if d.rationale.startswith(FALLBACK_MARKER))
    return SimulationResult(decisions, demand, profit, revenue, cost, fallbacks)


Prices = Union[PriceSchedule, Sequence[float], np.ndarray]


class ScenarioObjective:
    """Negated aggregator profit as a function of the price vector.

    Safe to call from several threads. ``evaluations`` counts calls. For the
    rule policy the population is evaluated in one vectorized pass; other
    policies go through :func:`simulate_demand`.
    """

    def __init__(self, scenario: ScenarioConfig, policy: DecisionPolicy, jobs: int = 1):
        self.scenario = scenario
        self.policy = policy
        self.jobs = jobs
        self._env = scenario.environment()
        self._batch = policy.batch(scenario.users, scenario.grid) if isinstance(policy, RulePolicy) else None
        self._lock = threading.Lock()
        self.evaluations = 0

    def schedule(self, prices: Prices) -> PriceSchedule:
        if isinstance(prices, PriceSchedule):
            prices.check_length(self.scenario.grid)
            return prices
        return self.scenario.schedule(float(p) for p in prices)

    def profit(self, prices: Prices) -> float:
        schedule = self.schedule(prices)
        with self._lock:
            self.evaluations += 1
        if self._batch is None:
            return simulate_demand(schedule, self.scenario, self.policy, self.jobs).profit
        power = self._batch.power(schedule, self._env)
        demand = aggregate_demand(power.tolist(), self.scenario.grid.slot_count)
        s = self.scenario
        return aggregator_profit(schedule, demand, s.fixed_load, s.wholesale, s.grid)

    def __call__(self, prices: Prices) -> float:
        return -self.profit(prices)


def make_objective(scenario: ScenarioConfig, policy: DecisionPolicy, jobs: int = 1) -> ScenarioObjective:
    return ScenarioObjective(scenario, policy, jobs)


# ---------------------------------------------------------------------------
# Export
# ---------------------------------------------------------------------------

DEMAND_CSV_COLUMNS = ("slot", "hour", "price", "wholesale", "fixed_load_kw", "ev_demand_kw", "total_kw")


def demand_csv(schedule: PriceSchedule, result: SimulationResult, scenario: ScenarioConfig) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(DEMAND_CSV_COLUMNS)
    for t in range(scenario.grid.slot_count):
        ev = result.demand.total[t]
        fixed = scenario.fixed_load.load[t]
        w.writerow(
            [
                t,
                f"{scenario.grid.slot_start(t):g}",
                repr(schedule.prices[t]),
                repr(float(scenario.wholesale.prices[t])),
                repr(float(fixed)),
                repr(ev),
                repr(ev + fixed),
            ]
        )
    return buf.getvalue()


def result_document(schedule: PriceSchedule, result: SimulationResult, scenario: ScenarioConfig) -> dict:
    return {
        "prices": list(schedule.prices),
        "price_bounds": [schedule.lower_bound, schedule.upper_bound],
        "profit": result.profit,
        "revenue": result.revenue,
        "wholesale_cost": result.wholesale_cost,
        "fallback_count": result.fallback_count,
        "demand_kw": list(result.demand.total),
        "decisions": [
            {
                "user_id": profile.user_id,
                "power_kw": list(d.power),
                "energy_kwh": d.energy_total,
                "cost": d.cost_total,
                "rationale": d.rationale,
            }
            for (profile, _), d in zip(scenario.users, result.decisions)
        ],
    }


def result_json(schedule: PriceSchedule, result: SimulationResult, scenario: ScenarioConfig) -> str:
    return json.dumps(result_document(schedule, result, scenario), indent=2, ensure_ascii=False) + "\n"

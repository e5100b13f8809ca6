"""Deterministic rule policy and its vectorized population evaluator."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from evdr.agents.base import (
    DecisionPolicy,
    EnergyNeed,
    WindowTooSmall,
    assess_charging_intention,
    decide_charging_amount,
    select_charging_slots,
    slot_order,
    usable_window,
)
from evdr.domain import (
    TOLERANCE,
    ChargingDecision,
    EnvironmentState,
    PriceSchedule,
    TimeGrid,
    UserProfile,
    VehicleState,
)


@dataclass(frozen=True)
class RulePolicy(DecisionPolicy):
    """Cheapest-first charging with a reservation price and a cold-weather margin.

    Below ``cold_threshold`` (°C) the mandatory trip energy grows by
    ``cold_factor``; the extra is taken out of comfort energy and capped at the
    battery headroom and at what the window can deliver.
    """

    cold_threshold: float = 0.0
    cold_factor: float = 1.15
    policy_name: str = "rule"

    def adjust_for_temperature(
        self, need: EnergyNeed, vehicle: VehicleState, window_kwh: float, temperature: float
    ) -> EnergyNeed:
        if temperature >= self.cold_threshold or need.mandatory_kwh <= 0:
            return need
        mand = need.mandatory_kwh
        inflated = max(mand, min(mand * self.cold_factor, vehicle.headroom_kwh, window_kwh))
        return EnergyNeed(inflated, max(0.0, need.comfort_kwh - (inflated - mand)))

    def decide(
        self,
        profile: UserProfile,
        vehicle: VehicleState,
        environment: EnvironmentState,
        schedule: PriceSchedule,
    ) -> ChargingDecision:
        grid = environment.grid
        need = assess_charging_intention(profile, vehicle)
        window_kwh = len(usable_window(profile, environment.current_slot)) * vehicle.max_charge_power * grid.slot_hours
        need = self.adjust_for_temperature(need, vehicle, window_kwh, environment.temperature)
        plan = select_charging_slots(need, profile, vehicle, schedule, grid, environment.current_slot)
        return decide_charging_amount(need, plan, vehicle, schedule, grid)

    def batch(self, users: Sequence[tuple[UserProfile, VehicleState]], grid: TimeGrid) -> RuleBatch:
        return RuleBatch(self, users, grid)


class RuleBatch:
    """Evaluates :class:`RulePolicy` for a whole population with array arithmetic.

    Produces power matrices bit-identical to calling ``decide`` per user; the
    elementwise operations and their order are the same. Used by the
    optimizer's objective, where building thousands of decision objects per
    iteration would dominate the run time.
    """

    def __init__(self, policy: RulePolicy, users: Sequence[tuple[UserProfile, VehicleState]], grid: TimeGrid):
        self.policy = policy
        self.grid = grid
        n, h = len(users), grid.slot_count
        self.n = n
        self.soc = np.array([v.soc for _, v in users], dtype=float)
        self.cap = np.array([v.battery_capacity for _, v in users], dtype=float)
        self.eta = np.array([v.charge_efficiency for _, v in users], dtype=float)
        self.pmax = np.array([v.max_charge_power for _, v in users], dtype=float)
        self.req = np.array([p.required_soc_for_trip for p, _ in users], dtype=float)
        self.target = np.array([p.target_soc for p, _ in users], dtype=float)
        self.reservation = np.array([p.reservation_price for p, _ in users], dtype=float)
        self.window = np.zeros((n, h), dtype=bool)
        for i, (p, _) in enumerate(users):
            self.window[i, list(p.preferred_window)] = True
        self.ids = [p.user_id for p, _ in users]

    def needs(self, environment: EnvironmentState) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Mandatory and comfort kWh per user after the temperature rule, plus the usable window mask."""
        window = self.window.copy()
        window[:, : environment.current_slot] = False
        mand = np.maximum(0.0, self.req - self.soc) * self.cap / self.eta
        comfort = np.maximum(0.0, self.target - np.maximum(self.soc, self.req)) * self.cap / self.eta
        window_kwh = window.sum(axis=1).astype(float) * self.pmax * self.grid.slot_hours
        p = self.policy
        if environment.temperature < p.cold_threshold:
            headroom = (1.0 - self.soc) * self.cap / self.eta
            inflated = np.maximum(mand, np.minimum(np.minimum(mand * p.cold_factor, headroom), window_kwh))
            inflated = np.where(mand > 0, inflated, mand)
            comfort = np.maximum(0.0, comfort - (inflated - mand))
            short = window_kwh < mand - TOLERANCE
            mand = inflated
        else:
            short = window_kwh < mand - TOLERANCE
        if short.any():
            i = int(np.flatnonzero(short)[0])
            raise WindowTooSmall(f"user {self.ids[i]}: window cannot deliver the trip energy")
        return mand, comfort, window

    def power(self, schedule: PriceSchedule, environment: EnvironmentState) -> np.ndarray:
        """(N, H) charging power matrix in kW."""
        prices = schedule.prices
        dt = self.grid.slot_hours
        rem_m, rem_c, window = self.needs(environment)
        out = np.zeros((self.n, self.grid.slot_count))
        for t in slot_order(prices):
            inw = window[:, t]
            pm = np.where(inw, np.minimum(rem_m / dt, self.pmax), 0.0)
            rem_m = np.maximum(0.0, rem_m - pm * dt)
            ok = inw & (prices[t] <= self.reservation)
            pc = np.where(ok, np.minimum(rem_c / dt, self.pmax - pm), 0.0)
            rem_c = np.maximum(0.0, rem_c - pc * dt)
            out[:, t] = pm + pc
        return out

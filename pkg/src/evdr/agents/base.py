"""Decision-policy contract and the three charging decision steps.

A user's need is split into *mandatory* energy (to reach the SoC the next
trip requires, bought at any price) and *comfort* energy (up to the preferred
target SoC, bought only in slots priced at or below the user's reservation
price). All energies here are grid-side kWh: a battery gains
``energy * charge_efficiency``.
"""

from __future__ import annotations

import abc
from dataclasses import dataclass

from evdr.domain import (
    TOLERANCE,
    ChargingDecision,
    EnvironmentState,
    PriceSchedule,
    TimeGrid,
    UserProfile,
    VehicleState,
)


class WindowTooSmall(ValueError):
    """The preferred window cannot deliver the trip's mandatory energy."""


@dataclass(frozen=True)
class EnergyNeed:
    mandatory_kwh: float
    comfort_kwh: float

    def __post_init__(self) -> None:
        if self.mandatory_kwh < 0 or self.comfort_kwh < 0:
            raise ValueError("energy needs must be >= 0")

    @property
    def total_kwh(self) -> float:
        return self.mandatory_kwh + self.comfort_kwh


@dataclass(frozen=True)
class SlotPlan:
    """Slots to walk, cheapest first, and the subset comfort energy may use."""

    order: tuple[int, ...]
    comfort_eligible: frozenset[int]


class DecisionPolicy(abc.ABC):
    """Maps one user's situation and a price schedule to a charging decision.

    Implementations must be deterministic for identical inputs and safe to call
    from many threads at once.
    """

    policy_name: str = "abstract"

    @abc.abstractmethod
    def decide(
        self,
        profile: UserProfile,
        vehicle: VehicleState,
        environment: EnvironmentState,
        schedule: PriceSchedule,
    ) -> ChargingDecision:
        ...


def assess_charging_intention(profile: UserProfile, vehicle: VehicleState) -> EnergyNeed:
    cap, eta, soc = vehicle.battery_capacity, vehicle.charge_efficiency, vehicle.soc
    mandatory = max(0.0, profile.required_soc_for_trip - soc) * cap / eta
    comfort = max(0.0, profile.target_soc - max(soc, profile.required_soc_for_trip)) * cap / eta
    return EnergyNeed(mandatory, comfort)


def usable_window(profile: UserProfile, current_slot: int = 0) -> tuple[int, ...]:
    return tuple(s for s in profile.preferred_window if s >= current_slot)


def slot_order(prices: tuple[float, ...]) -> tuple[int, ...]:
    """All slot indices sorted by (price, index)."""
    return tuple(sorted(range(len(prices)), key=lambda t: (prices[t], t)))


def select_charging_slots(
    need: EnergyNeed,
    profile: UserProfile,
    vehicle: VehicleState,
    schedule: PriceSchedule,
    grid: TimeGrid,
    current_slot: int = 0,
) -> SlotPlan:
    """Order the usable window cheapest first.

    Mandatory energy may go anywhere in the window; comfort energy only where
    the price is at or below ``profile.reservation_price``. If the need is
    comfort-only, the order is restricted to the eligible slots.

    Raises:
        WindowTooSmall: when the window cannot deliver ``need.mandatory_kwh``.
    """
    schedule.check_length(grid)
    window = set(usable_window(profile, current_slot))
    window_kwh = len(window) * vehicle.max_charge_power * grid.slot_hours
    if window_kwh < need.mandatory_kwh - TOLERANCE:
        raise WindowTooSmall(
            f"user {profile.user_id}: window delivers {window_kwh:.3f} kWh, "
            f"trip needs {need.mandatory_kwh:.3f} kWh"
        )
    ordered = [t for t in slot_order(schedule.prices) if t in window]
    eligible = frozenset(t for t in ordered if schedule.prices[t] <= profile.reservation_price)
    if need.mandatory_kwh <= 0:
        ordered = [t for t in ordered if t in eligible]
    return SlotPlan(tuple(ordered), eligible)


def decide_charging_amount(
    need: EnergyNeed,
    plan: SlotPlan,
    vehicle: VehicleState,
    schedule: PriceSchedule,
    grid: TimeGrid,
    rationale: str = "",
) -> ChargingDecision:
    """Greedy fill of the planned slots, mandatory energy first in each slot."""
    dt = grid.slot_hours
    pmax = vehicle.max_charge_power
    rem_m, rem_c = need.mandatory_kwh, need.comfort_kwh
    power = [0.0] * grid.slot_count
    for t in plan.order:
        pm = min(rem_m / dt, pmax)
        rem_m = max(0.0, rem_m - pm * dt)
        pc = 0.0
        if t in plan.comfort_eligible:
            pc = min(rem_c / dt, pmax - pm)
            rem_c = max(0.0, rem_c - pc * dt)
        power[t] = pm + pc
    if rem_m > TOLERANCE:
        raise WindowTooSmall(f"{rem_m:.6f} kWh of mandatory energy left unplaced")
    return ChargingDecision.from_power(power, vehicle=vehicle, schedule=schedule, slot_hours=dt, rationale=rationale)

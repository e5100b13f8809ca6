import math
from dataclasses import replace
from pathlib import Path

import pytest

from evdr.domain import EnvironmentState, IncomeLevel, PriceSchedule, TimeGrid, UserProfile, VehicleState
from evdr.profilegen import build_scenario, generate_synthetic_users

FIXTURES = Path(__file__).parent / "fixtures"

WIDE_BOUNDS = (0.01, 10.0)


def make_profile(**kw) -> UserProfile:
    base = dict(
        user_id="u0",
        age=40,
        occupation="teacher",
        income_level=IncomeLevel.MEDIUM,
        residence="suburban house",
        environmental_awareness=0.5,
        tech_acceptance=0.5,
        risk_preference=0.5,
        reservation_price=0.15,
        preferred_window=(0, 1, 2, 3, 4),
        target_soc=0.8,
        required_soc_for_trip=0.3,
    )
    base.update(kw)
    return UserProfile(**base)


def make_vehicle(**kw) -> VehicleState:
    base = dict(battery_capacity=50.0, soc=0.3, max_charge_power=10.0, charge_efficiency=1.0)
    base.update(kw)
    return VehicleState(**base)


def schedule(prices, bounds=WIDE_BOUNDS) -> PriceSchedule:
    return PriceSchedule(tuple(prices), *bounds)


@pytest.fixture
def grid5():
    return TimeGrid(6, 5, 1.0)


@pytest.fixture
def env5(grid5):
    return EnvironmentState(grid5, temperature=15.0)


@pytest.fixture
def alice():
    profile = make_profile(
        user_id="alice",
        age=34,
        occupation="software engineer",
        residence="urban apartment",
        environmental_awareness=0.7,
        tech_acceptance=0.9,
        risk_preference=0.4,
        reservation_price=0.16,
        target_soc=0.8,
        required_soc_for_trip=0.6,
    )
    vehicle = VehicleState(battery_capacity=60.0, soc=0.3, max_charge_power=11.0, charge_efficiency=0.95)
    return profile, vehicle


def dyadic_greedy_instance(rng, max_slots=4, max_power=6):
    """A random rule-policy instance whose energies and prices are exact binary fractions.

    SoC values are multiples of 1/16, capacities multiples of 16 kWh, power is
    whole kW, slots are one hour and prices are multiples of 1/256 $/kWh, so
    every product and sum in a decision is exact and allocations land on the
    1 kW lattice.
    """
    h = int(rng.integers(1, max_slots + 1))
    grid = TimeGrid(6, h, 1.0)
    prices = tuple(int(k) / 256 for k in rng.integers(23, 57, size=h))
    window = tuple(sorted(int(s) for s in rng.choice(h, size=int(rng.integers(1, h + 1)), replace=False)))
    pmax = float(rng.integers(1, max_power + 1))
    cap = 16.0 * float(rng.integers(1, 3))
    soc16 = int(rng.integers(0, 16))
    target16 = int(rng.integers(soc16, 17))
    # keep the trip energy within what the window can deliver
    max_mand16 = int(len(window) * pmax * 16 // cap)
    req16 = int(rng.integers(0, min(target16, soc16 + max_mand16) + 1))
    reservation = int(rng.integers(23, 57)) / 256
    profile = make_profile(
        reservation_price=reservation,
        preferred_window=window,
        target_soc=target16 / 16,
        required_soc_for_trip=req16 / 16,
    )
    vehicle = VehicleState(cap, soc16 / 16, pmax, 1.0)
    return profile, vehicle, EnvironmentState(grid, 15.0), PriceSchedule(prices, 1 / 256, 1.0)


def inelastic_scenario(n=3, grid=None, bounds=(0.09, 0.22), seed=0):
    """Users whose demand does not react to price at all.

    Each user has only trip energy and a one-slot window, so the cheapest-first
    fill has nowhere to shift to.
    """
    grid = grid or TimeGrid()
    users = []
    for i, (p, v) in enumerate(generate_synthetic_users(n, grid, bounds, seed)):
        # half a slot of charging at full power
        req = min(1.0, v.soc + 0.5 * v.max_charge_power * grid.slot_hours * v.charge_efficiency / v.battery_capacity)
        p = replace(
            p,
            reservation_price=math.inf,
            preferred_window=(i % grid.slot_count,),
            required_soc_for_trip=req,
            target_soc=req,
        )
        users.append((p, v))
    return build_scenario(users, grid=grid, bounds=bounds, seed=seed)


# (criterion, passed, detail) rows filled in by test_acceptance.py
ACCEPTANCE_RESULTS: list[tuple[int, bool, str]] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number, passed, detail in sorted(ACCEPTANCE_RESULTS):
        terminalreporter.write_line(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")

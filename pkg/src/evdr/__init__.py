"""Bilevel EV demand response.

The lower layer simulates how each EV user charges under an hourly retail
price schedule; the upper layer searches that schedule for the aggregator's
maximum profit with particle swarm optimization.
"""

from evdr.domain import (
    ChargingDecision,
    DemandCurve,
    EnvironmentState,
    PriceSchedule,
    ScenarioConfig,
    TimeGrid,
    UserProfile,
    VehicleState,
    validate_scenario,
)

__version__ = "0.1.0"

__all__ = [
    "ChargingDecision",
    "DemandCurve",
    "EnvironmentState",
    "PriceSchedule",
    "ScenarioConfig",
    "TimeGrid",
    "UserProfile",
    "VehicleState",
    "validate_scenario",
]

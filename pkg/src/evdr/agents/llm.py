"""LLM-backed decision policy.

The model sees one user's profile, vehicle, environment and the full price
schedule, and must answer with a ``<decision>`` block holding a JSON object::

    <decision>
    {"charge": "yes", "per_slot_power_kw": [11.0, 5.5, 0, 0, 0], "estimated_cost": 2.1}
    </decision>

Only ``per_slot_power_kw`` drives the decision. Powers are clamped to the
vehicle's limits and all money is recomputed locally; ``estimated_cost`` is
kept only as part of the raw text in ``rationale``.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import math
import re
import threading

from evdr.agents.base import DecisionPolicy
from evdr.agents.rule import RulePolicy
from evdr.domain import (
    ChargingDecision,
    EnvironmentState,
    PriceSchedule,
    TimeGrid,
    UserProfile,
    VehicleState,
)
from evdr.gateway import CompletionRequest, GatewayError, LLMGateway

logger = logging.getLogger(__name__)

FALLBACK_MARKER = "fallback:rule"

DECISION_SYSTEM_TEXT = (
    "You simulate the charging behaviour of one individual electric-vehicle owner. "
    "Reason from the owner's profile, the vehicle's state, the weather and the retail "
    "electricity prices, then answer exactly in the requested format."
)

_BLOCK = re.compile(r"<decision>(.*?)</decision>", re.DOTALL | re.IGNORECASE)
_FENCE = re.compile(r"^```[a-zA-Z]*\s*|\s*```$")


class ParseFailure(ValueError):
    """The response has no usable decision block; callers fall back."""


def _pct(x: float) -> str:
    s = f"{x * 100:.1f}"
    return (s[:-2] if s.endswith(".0") else s) + "%"


def build_decision_prompt(
    profile: UserProfile,
    vehicle: VehicleState,
    environment: EnvironmentState,
    schedule: PriceSchedule,
) -> str:
    grid = environment.grid
    h = grid.slot_count
    window = ", ".join(str(s) for s in profile.preferred_window) or "none"
    lines = [
        "Decide how this electric-vehicle owner charges during the demand-response window.",
        "",
        "User profile",
        f"- user_id: {profile.user_id}",
        f"- age: {profile.age}",
        f"- occupation: {profile.occupation}",
        f"- income_level: {profile.income_level.value}",
        f"- residence: {profile.residence}",
        f"- environmental_awareness: {profile.environmental_awareness:.2f}",
        f"- tech_acceptance: {profile.tech_acceptance:.2f}",
        f"- risk_preference: {profile.risk_preference:.2f}",
        f"- reservation_price: ${profile.reservation_price:.4f}/kWh (most they pay for charging beyond the trip need)",
        f"- preferred_slots: {window}",
        "",
        "Vehicle",
        f"- battery_capacity: {vehicle.battery_capacity:g} kWh",
        f"- current_soc: {_pct(vehicle.soc)}",
        f"- target_soc: {_pct(profile.target_soc)}",
        f"- required_soc_for_next_trip: {_pct(profile.required_soc_for_trip)}",
        f"- max_charge_power: {vehicle.max_charge_power:g} kW",
        f"- charge_efficiency: {vehicle.charge_efficiency:g}",
        "",
        "Environment",
        f"- temperature: {environment.temperature:g} °C",
        f"- current_slot: {environment.current_slot}",
        f"- slot_length: {grid.slot_hours:g} h",
        "",
        "Retail electricity price ($/kWh)",
    ]
    lines += [f"- slot {t} ({grid.slot_label(t)}): {schedule.prices[t]:.4f}" for t in range(h)]
    lines += [
        "",
        "Explain your reasoning briefly, then end with exactly one block of this form:",
        "<decision>",
        f'{{"charge": "yes" or "no", "per_slot_power_kw": [{h} numbers, one per slot in kW], "estimated_cost": number}}',
        "</decision>",
    ]
    return "\n".join(lines) + "\n"


def _strict_constant(name: str) -> float:
    raise ValueError(f"non-finite constant {name}")


def parse_decision_response(
    text: str,
    vehicle: VehicleState,
    schedule: PriceSchedule,
    grid: TimeGrid,
) -> ChargingDecision:
    """Turn model text into a valid decision.

    Each power is clamped into ``[0, max_charge_power]``, then trimmed in slot
    order so the battery never goes past full. The raw text is kept as the
    rationale.

    Raises:
        ParseFailure: if no block is found, it is not a JSON object, or
            ``per_slot_power_kw`` is not a list of ``grid.slot_count`` finite numbers.
    """
    if not isinstance(text, str):
        raise ParseFailure("response is not text")
    match = _BLOCK.search(text)
    if match is None:
        raise ParseFailure("no <decision> block")
    body = _FENCE.sub("", match.group(1).strip())
    try:
        doc = json.loads(body, parse_constant=_strict_constant)
    except (ValueError, RecursionError) as exc:
        raise ParseFailure(f"decision block is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ParseFailure("decision block is not a JSON object")
    raw = doc.get("per_slot_power_kw")
    if not isinstance(raw, list) or len(raw) != grid.slot_count:
        raise ParseFailure(f"per_slot_power_kw must list {grid.slot_count} values")
    values = []
    for x in raw:
        if isinstance(x, bool) or not isinstance(x, (int, float)):
            raise ParseFailure(f"non-numeric power {x!r}")
        try:
            v = float(x)
        except OverflowError as exc:
            raise ParseFailure(f"power {x!r} out of range") from exc
        if not math.isfinite(v):
            raise ParseFailure(f"non-finite power {x!r}")
        values.append(v)
    charge = doc.get("charge", "yes")
    if charge is False or (isinstance(charge, str) and charge.strip().lower() == "no"):
        values = [0.0] * grid.slot_count

    dt = grid.slot_hours
    room = vehicle.headroom_kwh
    power = []
    for v in values:
        p = min(max(v, 0.0), vehicle.max_charge_power, max(room, 0.0) / dt)
        room -= p * dt
        power.append(p)
    return ChargingDecision.from_power(power, vehicle=vehicle, schedule=schedule, slot_hours=dt, rationale=text)


class LLMPolicy(DecisionPolicy):
    """Asks the model for each decision; any failure falls back to the rule policy.

    With ``strict=True`` gateway errors propagate instead of falling back
    (parse failures still fall back).
    """

    policy_name = "llm"

    def __init__(
        self,
        gateway: LLMGateway,
        model: str | None = None,
        fallback: DecisionPolicy | None = None,
        strict: bool = False,
        max_tokens: int = 512,
    ):
        self.gateway = gateway
        self.model = model or gateway.model
        self.fallback = fallback or RulePolicy()
        self.strict = strict
        self.max_tokens = max_tokens
        self._lock = threading.Lock()
        self.fallback_count = 0

    def request_for(
        self, profile: UserProfile, vehicle: VehicleState, environment: EnvironmentState, schedule: PriceSchedule
    ) -> CompletionRequest:
        return CompletionRequest(
            model=self.model,
            system_text=DECISION_SYSTEM_TEXT,
            user_text=build_decision_prompt(profile, vehicle, environment, schedule),
            max_tokens=self.max_tokens,
            temperature=0.0,
        )

    def decide(
        self,
        profile: UserProfile,
        vehicle: VehicleState,
        environment: EnvironmentState,
        schedule: PriceSchedule,
    ) -> ChargingDecision:
        request = self.request_for(profile, vehicle, environment, schedule)
        try:
            result = self.gateway.complete(request)
            return parse_decision_response(result.text, vehicle, schedule, environment.grid)
        except GatewayError as exc:
            if self.strict:
                raise
            reason = exc.kind
        except ParseFailure as exc:
            reason = f"parse: {exc}"
        logger.info("user %s: falling back to rule policy (%s)", profile.user_id, reason)
        with self._lock:
            self.fallback_count += 1
        decision = self.fallback.decide(profile, vehicle, environment, schedule)
        return dataclasses.replace(decision, rationale=f"{FALLBACK_MARKER} ({reason})")

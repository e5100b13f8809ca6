"""Lower layer: per-user charging decision policies."""

from evdr.agents.base import (
    DecisionPolicy,
    EnergyNeed,
    SlotPlan,
    WindowTooSmall,
    assess_charging_intention,
    decide_charging_amount,
    select_charging_slots,
)
from evdr.agents.llm import (
    FALLBACK_MARKER,
    LLMPolicy,
    ParseFailure,
    build_decision_prompt,
    parse_decision_response,
)
from evdr.agents.rule import RuleBatch, RulePolicy


def rule_policy_decide(profile, vehicle, environment, schedule):
    """Decide with a default-parameter :class:`RulePolicy`."""
    return RulePolicy().decide(profile, vehicle, environment, schedule)


def llm_policy_decide(profile, vehicle, environment, schedule, gateway):
    """Decide with an :class:`LLMPolicy` over ``gateway``."""
    return LLMPolicy(gateway).decide(profile, vehicle, environment, schedule)


__all__ = [
    "DecisionPolicy",
    "EnergyNeed",
    "FALLBACK_MARKER",
    "LLMPolicy",
    "ParseFailure",
    "RuleBatch",
    "RulePolicy",
    "SlotPlan",
    "WindowTooSmall",
    "assess_charging_intention",
    "build_decision_prompt",
    "decide_charging_amount",
    "llm_policy_decide",
    "parse_decision_response",
    "rule_policy_decide",
    "select_charging_slots",
]

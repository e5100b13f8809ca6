"""User population generation: seeded synthetic draws and LLM personas.

Every distribution used for synthetic users lives in
:class:`PopulationDistributions`, so experiments can override any of them.
"""

from __future__ import annotations

import json
import logging
import math
import re
import zlib
from dataclasses import dataclass, field, replace
from typing import Any, Sequence

import numpy as np

from evdr.domain import (
    FixedLoadProfile,
    IncomeLevel,
    PolicyKind,
    ScenarioConfig,
    TimeGrid,
    UserProfile,
    VehicleState,
    WholesaleSchedule,
    user_violations,
    validate_scenario,
)
from evdr.gateway import CompletionRequest, GatewayError, LLMGateway

logger = logging.getLogger(__name__)

User = tuple[UserProfile, VehicleState]

DEFAULT_PRICE_BOUNDS = (0.09, 0.22)
DEFAULT_USERS = 100

# Reference day-ahead wholesale curve, $/kWh, indexed by hour of day.
WHOLESALE_24H = (
    0.045, 0.040, 0.038, 0.037, 0.040, 0.050, 0.070, 0.095,
    0.120, 0.110, 0.090, 0.085, 0.080, 0.078, 0.080, 0.090,
    0.105, 0.130, 0.150, 0.140, 0.115, 0.090, 0.070, 0.055,
)

# Non-EV household load per user, kW, indexed by hour of day.
FIXED_LOAD_PER_USER_24H = (
    0.40, 0.35, 0.33, 0.32, 0.35, 0.50, 0.90, 1.30,
    1.10, 0.80, 0.70, 0.70, 0.75, 0.70, 0.70, 0.80,
    1.00, 1.40, 1.70, 1.60, 1.30, 1.00, 0.75, 0.55,
)


@dataclass(frozen=True)
class PopulationDistributions:
    age_range: tuple[int, int] = (20, 70)
    income_levels: tuple[str, ...] = ("low", "medium", "high")
    income_weights: tuple[float, ...] = (0.3, 0.5, 0.2)
    occupations: tuple[str, ...] = (
        "teacher", "software engineer", "nurse", "retail worker", "accountant",
        "delivery driver", "retired", "student", "doctor", "electrician",
    )
    residences: tuple[str, ...] = ("urban apartment", "suburban house", "rural house", "city townhouse")
    capacities_kwh: tuple[float, ...] = (40.0, 50.0, 60.0, 75.0)
    soc_range: tuple[float, float] = (0.1, 0.6)
    max_powers_kw: tuple[float, ...] = (7.4, 11.0, 22.0)
    target_soc_range: tuple[float, float] = (0.7, 0.95)
    required_soc_min: float = 0.2
    full_window_probability: float = 0.7
    charge_efficiency: float = 0.95
    # Trip energy is kept this far below what the window can deliver.
    window_margin: float = 0.999


DEFAULT_DISTRIBUTIONS = PopulationDistributions()


def substream_seed(seed: int, name: str) -> int:
    """Independent 64-bit seed for the named random stream under ``seed``."""
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(zlib.crc32(name.encode("utf-8")),))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _hour_index(grid: TimeGrid, slot: int) -> int:
    return int(math.floor(grid.slot_start(slot))) % 24


def default_wholesale(grid: TimeGrid) -> WholesaleSchedule:
    return WholesaleSchedule(tuple(WHOLESALE_24H[_hour_index(grid, t)] for t in range(grid.slot_count)))


def default_fixed_load(grid: TimeGrid, n_users: int) -> FixedLoadProfile:
    return FixedLoadProfile(
        tuple(FIXED_LOAD_PER_USER_24H[_hour_index(grid, t)] * n_users for t in range(grid.slot_count))
    )


def _max_required_soc(soc: float, window_len: int, pmax: float, grid: TimeGrid, eta: float, cap: float,
                      margin: float) -> float:
    return soc + margin * window_len * pmax * grid.slot_hours * eta / cap


def generate_synthetic_users(
    n: int,
    grid: TimeGrid,
    bounds: tuple[float, float],
    seed: int,
    distributions: PopulationDistributions = DEFAULT_DISTRIBUTIONS,
    id_prefix: str = "user",
) -> list[User]:
    """Draw ``n`` users; a pure function of its arguments."""
    if n < 0:
        raise ValueError("n must be >= 0")
    d = distributions
    rng = np.random.default_rng(seed)
    h = grid.slot_count
    lo, hi = bounds
    users = []
    for i in range(n):
        age = int(rng.integers(d.age_range[0], d.age_range[1] + 1))
        occupation = d.occupations[int(rng.integers(len(d.occupations)))]
        income = d.income_levels[int(rng.choice(len(d.income_levels), p=d.income_weights))]
        residence = d.residences[int(rng.integers(len(d.residences)))]
        env, tech, risk = (float(x) for x in rng.uniform(0.0, 1.0, 3))
        cap = float(d.capacities_kwh[int(rng.integers(len(d.capacities_kwh)))])
        soc = float(rng.uniform(*d.soc_range))
        pmax = float(d.max_powers_kw[int(rng.integers(len(d.max_powers_kw)))])
        reservation = float(rng.uniform(lo, hi))
        target = float(rng.uniform(*d.target_soc_range))
        required = float(rng.uniform(d.required_soc_min, target))
        if rng.random() < d.full_window_probability:
            window = tuple(range(h))
        else:
            length = int(rng.integers(math.ceil(h / 2), h + 1))
            start = int(rng.integers(0, h - length + 1))
            window = tuple(range(start, start + length))
        eta = d.charge_efficiency
        required = min(required, _max_required_soc(soc, len(window), pmax, grid, eta, cap, d.window_margin))
        profile = UserProfile(
            user_id=f"{id_prefix}-{i:03d}",
            age=age,
            occupation=occupation,
            income_level=IncomeLevel(income),
            residence=residence,
            environmental_awareness=env,
            tech_acceptance=tech,
            risk_preference=risk,
            reservation_price=reservation,
            preferred_window=window,
            target_soc=target,
            required_soc_for_trip=required,
        )
        users.append((profile, VehicleState(cap, soc, pmax, eta)))
    return users


def build_scenario(
    users: Sequence[User] | None = None,
    *,
    n: int = DEFAULT_USERS,
    seed: int = 0,
    grid: TimeGrid | None = None,
    bounds: tuple[float, float] = DEFAULT_PRICE_BOUNDS,
    temperature: float = 15.0,
    policy_kind: PolicyKind | str = PolicyKind.RULE,
    wholesale: WholesaleSchedule | None = None,
    fixed_load: FixedLoadProfile | None = None,
    distributions: PopulationDistributions = DEFAULT_DISTRIBUTIONS,
) -> ScenarioConfig:
    """Assemble a validated scenario; draws a synthetic population when ``users`` is None.

    The population stream is ``substream_seed(seed, "population")``.
    """
    grid = grid or TimeGrid()
    if users is None:
        users = generate_synthetic_users(n, grid, bounds, substream_seed(seed, "population"), distributions)
    cfg = ScenarioConfig(
        grid=grid,
        price_bounds=bounds,
        wholesale=wholesale or default_wholesale(grid),
        fixed_load=fixed_load or default_fixed_load(grid, len(users)),
        users=tuple(users),
        temperature=temperature,
        seed=seed,
        policy_kind=policy_kind,
    )
    return validate_scenario(cfg)


# ---------------------------------------------------------------------------
# LLM personas
# ---------------------------------------------------------------------------

PERSONA_SYSTEM_TEXT = (
    "You create realistic, diverse electric-vehicle owner personas for an energy "
    "demand-response study. Answer only in the requested format."
)

PERSONA_FIELDS = (
    ("user_id", "short unique identifier"),
    ("age", "integer, 20-70"),
    ("occupation", "string"),
    ("income_level", '"low", "medium" or "high"'),
    ("residence", "string"),
    ("environmental_awareness", "0-1"),
    ("tech_acceptance", "0-1"),
    ("risk_preference", "0-1"),
    ("reservation_price", "$/kWh the owner accepts for non-essential charging"),
    ("preferred_window", "list of slot indices the owner can charge in"),
    ("target_soc", "0-1, state of charge wanted after charging"),
    ("required_soc_for_trip", "0-1, state of charge the next trip needs; <= target_soc"),
    ("battery_capacity", "kWh"),
    ("soc", "0-1, current state of charge"),
    ("max_charge_power", "kW"),
)

_PERSONA_BLOCK = re.compile(r"<personas>(.*?)</personas>", re.DOTALL | re.IGNORECASE)

# Clamp ranges used when repairing persona records.
_CLAMPS = {
    "age": (20, 70),
    "environmental_awareness": (0.0, 1.0),
    "tech_acceptance": (0.0, 1.0),
    "risk_preference": (0.0, 1.0),
    "target_soc": (0.0, 1.0),
    "required_soc_for_trip": (0.0, 1.0),
    "soc": (0.0, 1.0),
    "battery_capacity": (10.0, 200.0),
    "max_charge_power": (1.0, 350.0),
}


def build_persona_prompt(count: int, grid: TimeGrid, bounds: tuple[float, float], seed: int, batch: int) -> str:
    slots = ", ".join(f"{t} = {grid.slot_label(t)}" for t in range(grid.slot_count))
    fields = "\n".join(f"- {name}: {desc}" for name, desc in PERSONA_FIELDS)
    return (
        f"Generate {count} distinct electric-vehicle owner personas.\n"
        f"Cover demographic characteristics, psychological traits and charging preferences.\n"
        f"Charging slots: {slots}.\n"
        f"Retail prices range from ${bounds[0]:.2f} to ${bounds[1]:.2f} per kWh.\n"
        f"Population seed {seed}, batch {batch}.\n"
        f"\nEach persona is a JSON object with these fields:\n{fields}\n"
        f"\nReturn a JSON array of {count} objects between <personas> and </personas>.\n"
    )


def parse_persona_block(text: str) -> list[Any]:
    match = _PERSONA_BLOCK.search(text or "")
    if match is None:
        raise ValueError("no <personas> block")
    body = re.sub(r"^```[a-zA-Z]*\s*|\s*```$", "", match.group(1).strip())
    records = json.loads(body)
    if not isinstance(records, list):
        raise ValueError("<personas> block is not a JSON array")
    return records


def _num(x: Any) -> float | None:
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        return None
    try:
        v = float(x)
    except OverflowError:
        return None
    return v if math.isfinite(v) else None


def repair_persona(
    record: Any, grid: TimeGrid, bounds: tuple[float, float], eta: float = 0.95
) -> tuple[User, list[str]] | None:
    """Coerce one persona record into a valid user.

    Returns the user and the names of repaired fields, or None when the record
    cannot be repaired (not an object, or a numeric field missing/non-numeric).
    """
    if not isinstance(record, dict):
        return None
    repaired: list[str] = []
    nums: dict[str, float] = {}
    for key in (*_CLAMPS, "reservation_price"):
        v = _num(record.get(key))
        if v is None:
            return None
        lo, hi = _CLAMPS.get(key, bounds)
        if not lo <= v <= hi:
            v = min(max(v, lo), hi)
            repaired.append(key)
        nums[key] = v
    age = int(round(nums["age"]))
    if nums["required_soc_for_trip"] > nums["target_soc"]:
        nums["required_soc_for_trip"] = nums["target_soc"]
        repaired.append("required_soc_for_trip")

    strings = {}
    for key, default in (("user_id", ""), ("occupation", "unspecified"), ("residence", "unspecified")):
        v = record.get(key)
        if not isinstance(v, str) or not v.strip():
            v = default
            if key != "user_id":
                repaired.append(key)
        strings[key] = v.strip()
    income = record.get("income_level")
    if not isinstance(income, str) or income.strip().lower() not in {lvl.value for lvl in IncomeLevel}:
        income = "medium"
        repaired.append("income_level")

    raw_window = record.get("preferred_window")
    window: tuple[int, ...] = ()
    if isinstance(raw_window, list):
        window = tuple(
            sorted({int(s) for s in raw_window if _num(s) is not None and float(s).is_integer() and 0 <= s < grid.slot_count})
        )
        if len(window) != len(raw_window):
            repaired.append("preferred_window")
    if not window:
        window = tuple(range(grid.slot_count))
        if "preferred_window" not in repaired:
            repaired.append("preferred_window")

    cap_req = _max_required_soc(
        nums["soc"], len(window), nums["max_charge_power"], grid, eta, nums["battery_capacity"],
        DEFAULT_DISTRIBUTIONS.window_margin,
    )
    if nums["required_soc_for_trip"] > cap_req:
        nums["required_soc_for_trip"] = cap_req
        repaired.append("required_soc_for_trip")

    profile = UserProfile(
        user_id=strings["user_id"],
        age=age,
        occupation=strings["occupation"],
        income_level=IncomeLevel(income.strip().lower()),
        residence=strings["residence"],
        environmental_awareness=nums["environmental_awareness"],
        tech_acceptance=nums["tech_acceptance"],
        risk_preference=nums["risk_preference"],
        reservation_price=nums["reservation_price"],
        preferred_window=window,
        target_soc=nums["target_soc"],
        required_soc_for_trip=nums["required_soc_for_trip"],
    )
    vehicle = VehicleState(nums["battery_capacity"], nums["soc"], nums["max_charge_power"], eta)
    return (profile, vehicle), repaired


@dataclass
class LLMPopulation:
    users: list[User]
    repaired: int = 0
    dropped: int = 0
    topped_up: int = 0
    gateway_failures: int = 0
    repairs: list[tuple[int, list[str]]] = field(default_factory=list)


def generate_llm_users(
    n: int,
    gateway: LLMGateway,
    seed: int,
    *,
    grid: TimeGrid | None = None,
    bounds: tuple[float, float] = DEFAULT_PRICE_BOUNDS,
    distributions: PopulationDistributions = DEFAULT_DISTRIBUTIONS,
    batch_size: int = 10,
    strict: bool = False,
) -> LLMPopulation:
    """Ask the model for ``n`` personas, repair or drop bad records, top up synthetically.

    The population always has exactly ``n`` users. With ``strict=True`` a
    gateway failure raises :class:`GatewayError` instead of being topped up.
    """
    grid = grid or TimeGrid()
    out = LLMPopulation(users=[])
    if n <= 0:
        return out
    requests = []
    for b, start in enumerate(range(0, n, batch_size)):
        count = min(batch_size, n - start)
        requests.append(
            CompletionRequest(
                model=gateway.model,
                system_text=PERSONA_SYSTEM_TEXT,
                user_text=build_persona_prompt(count, grid, bounds, seed, b),
                max_tokens=4096,
                temperature=0.8,
            )
        )
    records: list[Any] = []
    for b, res in enumerate(gateway.complete_batch(requests)):
        if isinstance(res, GatewayError):
            if strict:
                raise res
            out.gateway_failures += 1
            logger.warning("persona batch %d failed: %s", b, res)
            continue
        try:
            records += parse_persona_block(res.text)
        except ValueError as exc:
            logger.warning("persona batch %d unparseable: %s", b, exc)
            continue

    seen: set[str] = set()
    for idx, record in enumerate(records):
        if len(out.users) == n:
            break
        fixed = repair_persona(record, grid, bounds, distributions.charge_efficiency)
        if fixed is None:
            out.dropped += 1
            logger.info("persona %d dropped: unrepairable", idx)
            continue
        (profile, vehicle), repaired = fixed
        uid = profile.user_id
        if not uid or uid in seen:
            uid = f"llm-{len(out.users):03d}"
            while uid in seen:
                uid += "x"
            profile = replace(profile, user_id=uid)
            repaired.append("user_id")
        if user_violations(profile, vehicle, grid):
            out.dropped += 1
            continue
        if repaired:
            out.repaired += 1
            out.repairs.append((idx, repaired))
            logger.info("persona %d repaired: %s", idx, ", ".join(repaired))
        seen.add(uid)
        out.users.append((profile, vehicle))

    missing = n - len(out.users)
    if missing:
        if out.gateway_failures == len(requests):
            logger.warning("persona generation unavailable; using %d synthetic users", missing)
        extra = generate_synthetic_users(
            missing, grid, bounds, substream_seed(seed, "population-topup"), distributions, id_prefix="synthetic"
        )
        for p, v in extra:
            uid = p.user_id
            while uid in seen:
                uid += "-t"
            seen.add(uid)
            out.users.append((replace(p, user_id=uid), v))
        out.topped_up = missing
    return out


"""Core value types for the demand-response engine.

Units used throughout:

- power: kW
- energy: kWh
- prices: $/kWh
- time: hours (slot width ``slot_hours``)

Scenario types (``TimeGrid``, ``UserProfile``, ``VehicleState`` ...) are frozen
dataclasses that report their own invariant violations; ``validate_scenario``
collects every violation in a config at once. Types produced by computation
(``PriceSchedule``, ``ChargingDecision``, ``DemandCurve``) refuse to be
constructed in an invalid state.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Any, Iterable, Sequence

# Absolute slack for floating-point invariant checks.
TOLERANCE = 1e-9


class IncomeLevel(str, Enum):
    LOW = "low"
    MEDIUM = "medium"
    HIGH = "high"


class PolicyKind(str, Enum):
    RULE = "rule"
    LLM = "llm"


@dataclass(frozen=True)
class Violation:
    """One broken invariant, naming the offending field."""

    field: str
    message: str

    def __str__(self) -> str:
        return f"{self.field}: {self.message}"


class ValidationError(ValueError):
    """Raised when a value breaks one or more invariants.

    ``violations`` holds every problem found, not just the first.
    """

    def __init__(self, violations: Sequence[Violation]):
        self.violations = list(violations)
        super().__init__("; ".join(str(v) for v in self.violations))


class PriceBoundsError(ValidationError):
    """A price schedule is the wrong length or leaves [lower_bound, upper_bound]."""


def _is_number(x: Any) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool) and math.isfinite(x)


def _check_vector(name: str, values: Sequence[float], length: int, nonneg: bool = True) -> list[Violation]:
    out = []
    if len(values) != length:
        out.append(Violation(name, f"length {len(values)} does not match slot_count {length}"))
    for i, v in enumerate(values):
        if not _is_number(v):
            out.append(Violation(f"{name}[{i}]", f"must be a finite number, got {v!r}"))
        elif nonneg and v < 0:
            out.append(Violation(f"{name}[{i}]", f"must be >= 0, got {v!r}"))
    return out


def _check_unit(name: str, value: Any) -> list[Violation]:
    if not _is_number(value) or not 0.0 <= value <= 1.0:
        return [Violation(name, f"must be within [0, 1], got {value!r}")]
    return []


@dataclass(frozen=True)
class TimeGrid:
    """The demand-response window: ``slot_count`` slots of ``slot_hours`` starting at ``start_hour``."""

    start_hour: int = 6
    slot_count: int = 5
    slot_hours: float = 1.0

    def violations(self) -> list[Violation]:
        out = []
        if not isinstance(self.start_hour, int) or isinstance(self.start_hour, bool) or not 0 <= self.start_hour < 24:
            out.append(Violation("grid.start_hour", f"must be an integer hour in [0, 24), got {self.start_hour!r}"))
        if not isinstance(self.slot_count, int) or isinstance(self.slot_count, bool) or self.slot_count < 1:
            out.append(Violation("grid.slot_count", f"must be an integer >= 1, got {self.slot_count!r}"))
        if not _is_number(self.slot_hours) or self.slot_hours <= 0:
            out.append(Violation("grid.slot_hours", f"must be > 0, got {self.slot_hours!r}"))
        if not out and self.start_hour + self.slot_count * self.slot_hours > 24 + TOLERANCE:
            out.append(Violation("grid", "window must end within a single day (start_hour + slot_count * slot_hours <= 24)"))
        return out

    def slot_start(self, slot: int) -> float:
        return self.start_hour + slot * self.slot_hours

    def slot_label(self, slot: int) -> str:
        return f"{_clock(self.slot_start(slot))}-{_clock(self.slot_start(slot + 1))}"


def _clock(hour: float) -> str:
    minutes = int(round(hour * 60))
    return f"{minutes // 60:02d}:{minutes % 60:02d}"


@dataclass(frozen=True)
class PriceSchedule:
    """Hourly retail prices, one per slot, held inside ``[lower_bound, upper_bound]``."""

    prices: tuple[float, ...]
    lower_bound: float
    upper_bound: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "prices", tuple(float(p) for p in self.prices))
        out = []
        if not _is_number(self.lower_bound) or self.lower_bound <= 0:
            out.append(Violation("lower_bound", "λ_min must be > 0"))
        if not _is_number(self.upper_bound) or (
            _is_number(self.lower_bound) and self.upper_bound < self.lower_bound
        ):
            out.append(Violation("upper_bound", "λ_max must be >= λ_min"))
        if not self.prices:
            out.append(Violation("prices", "schedule must contain at least one slot"))
        if not out:
            for t, p in enumerate(self.prices):
                if not math.isfinite(p) or not self.lower_bound <= p <= self.upper_bound:
                    out.append(
                        Violation(
                            f"prices[{t}]",
                            f"{p!r} is outside the price bounds "
                            f"[{self.lower_bound!r}, {self.upper_bound!r}]",
                        )
                    )
        if out:
            raise PriceBoundsError(out)

    def __len__(self) -> int:
        return len(self.prices)

    def __getitem__(self, t: int) -> float:
        return self.prices[t]

    @classmethod
    def flat(cls, price: float, slot_count: int, bounds: tuple[float, float]) -> PriceSchedule:
        return cls((price,) * slot_count, bounds[0], bounds[1])

    def check_length(self, grid: TimeGrid) -> None:
        if len(self.prices) != grid.slot_count:
            raise PriceBoundsError(
                [Violation("prices", f"expected {grid.slot_count} prices, got {len(self.prices)}")]
            )


@dataclass(frozen=True)
class WholesaleSchedule:
    prices: tuple[float, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "prices", tuple(self.prices))

    def violations(self, grid: TimeGrid) -> list[Violation]:
        return _check_vector("wholesale.prices", self.prices, grid.slot_count)


@dataclass(frozen=True)
class FixedLoadProfile:
    load: tuple[float, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "load", tuple(self.load))

    def violations(self, grid: TimeGrid) -> list[Violation]:
        return _check_vector("fixed_load.load", self.load, grid.slot_count)


@dataclass(frozen=True)
class UserProfile:
    """Demographic, psychological and charging-preference attributes of one EV user.

    ``reservation_price`` is the most the user will pay per kWh for charging
    beyond what the next trip requires. ``preferred_window`` lists the slot
    indices the user is willing to charge in.
    """

    user_id: str
    age: int
    occupation: str
    income_level: IncomeLevel
    residence: str
    environmental_awareness: float
    tech_acceptance: float
    risk_preference: float
    reservation_price: float
    preferred_window: tuple[int, ...]
    target_soc: float
    required_soc_for_trip: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "preferred_window", tuple(sorted(set(self.preferred_window))))
        if not isinstance(self.income_level, IncomeLevel):
            try:
                object.__setattr__(self, "income_level", IncomeLevel(self.income_level))
            except ValueError:
                pass  # reported by violations()

    def violations(self, grid: TimeGrid, prefix: str = "profile") -> list[Violation]:
        out = []
        if not isinstance(self.user_id, str) or not self.user_id:
            out.append(Violation(f"{prefix}.user_id", "must be a non-empty string"))
        if not isinstance(self.age, int) or isinstance(self.age, bool) or self.age < 0:
            out.append(Violation(f"{prefix}.age", f"must be a non-negative integer, got {self.age!r}"))
        if not isinstance(self.income_level, IncomeLevel):
            out.append(Violation(f"{prefix}.income_level", f"must be one of low/medium/high, got {self.income_level!r}"))
        for name in ("environmental_awareness", "tech_acceptance", "risk_preference", "target_soc", "required_soc_for_trip"):
            out += _check_unit(f"{prefix}.{name}", getattr(self, name))
        if (
            _is_number(self.required_soc_for_trip)
            and _is_number(self.target_soc)
            and self.required_soc_for_trip > self.target_soc
        ):
            out.append(Violation(f"{prefix}.required_soc_for_trip", "must be <= target_soc"))
        if not isinstance(self.reservation_price, (int, float)) or math.isnan(self.reservation_price) or self.reservation_price <= 0:
            out.append(Violation(f"{prefix}.reservation_price", f"must be > 0, got {self.reservation_price!r}"))
        bad = [s for s in self.preferred_window if not isinstance(s, int) or not 0 <= s < grid.slot_count]
        if bad:
            out.append(Violation(f"{prefix}.preferred_window", f"slots {bad} outside 0..{grid.slot_count - 1}"))
        return out


@dataclass(frozen=True)
class VehicleState:
    battery_capacity: float
    soc: float
    max_charge_power: float
    charge_efficiency: float = 0.95

    def violations(self, prefix: str = "vehicle") -> list[Violation]:
        out = _check_unit(f"{prefix}.soc", self.soc)
        for name in ("battery_capacity", "max_charge_power"):
            value = getattr(self, name)
            if not _is_number(value) or value <= 0:
                out.append(Violation(f"{prefix}.{name}", f"must be > 0, got {value!r}"))
        eta = self.charge_efficiency
        if not _is_number(eta) or not 0 < eta <= 1:
            out.append(Violation(f"{prefix}.charge_efficiency", f"must be within (0, 1], got {eta!r}"))
        return out

    @property
    def headroom_kwh(self) -> float:
        """Grid-side energy that would fill the battery completely."""
        return (1.0 - self.soc) * self.battery_capacity / self.charge_efficiency


@dataclass(frozen=True)
class EnvironmentState:
    grid: TimeGrid
    temperature: float
    current_slot: int = 0

    def __post_init__(self) -> None:
        if not 0 <= self.current_slot < self.grid.slot_count:
            raise ValidationError(
                [Violation("current_slot", f"must be within 0..{self.grid.slot_count - 1}")]
            )


@dataclass(frozen=True)
class ChargingDecision:
    """One agent's charging plan over the whole window.

    Build these with :meth:`from_power`, which derives the totals and checks
    the plan against the vehicle and schedule it was made for.
    """

    power: tuple[float, ...]
    energy_total: float
    cost_total: float
    rationale: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "power", tuple(float(p) for p in self.power))
        out = []
        for t, p in enumerate(self.power):
            if not math.isfinite(p) or p < 0:
                out.append(Violation(f"power[{t}]", f"must be finite and >= 0, got {p!r}"))
        if not math.isfinite(self.energy_total) or self.energy_total < -TOLERANCE:
            out.append(Violation("energy_total", f"must be >= 0, got {self.energy_total!r}"))
        if not math.isfinite(self.cost_total):
            out.append(Violation("cost_total", f"must be finite, got {self.cost_total!r}"))
        if out:
            raise ValidationError(out)

    @classmethod
    def from_power(
        cls,
        power: Sequence[float],
        *,
        vehicle: VehicleState,
        schedule: PriceSchedule,
        slot_hours: float,
        rationale: str = "",
    ) -> ChargingDecision:
        power = tuple(float(p) for p in power)
        if len(power) != len(schedule):
            raise ValidationError(
                [Violation("power", f"length {len(power)} does not match schedule length {len(schedule)}")]
            )
        decision = cls(
            power=power,
            energy_total=math.fsum(p * slot_hours for p in power),
            cost_total=math.fsum(p * slot_hours * lam for p, lam in zip(power, schedule.prices)),
            rationale=rationale,
        )
        out = decision.violations(vehicle, schedule, slot_hours)
        if out:
            raise ValidationError(out)
        return decision

    def violations(self, vehicle: VehicleState, schedule: PriceSchedule, slot_hours: float) -> list[Violation]:
        """Check the four decision invariants against the inputs it was made from."""
        out = []
        if len(self.power) != len(schedule):
            out.append(Violation("power", "length does not match schedule"))
            return out
        for t, p in enumerate(self.power):
            if p > vehicle.max_charge_power + TOLERANCE:
                out.append(Violation(f"power[{t}]", f"{p!r} kW exceeds max_charge_power {vehicle.max_charge_power!r}"))
        energy = math.fsum(p * slot_hours for p in self.power)
        if abs(energy - self.energy_total) > TOLERANCE:
            out.append(Violation("energy_total", f"{self.energy_total!r} != sum(power * slot_hours) = {energy!r}"))
        cost = math.fsum(p * slot_hours * lam for p, lam in zip(self.power, schedule.prices))
        if abs(cost - self.cost_total) > TOLERANCE:
            out.append(Violation("cost_total", f"{self.cost_total!r} != priced energy {cost!r}"))
        if self.resulting_soc(vehicle) > 1.0 + TOLERANCE:
            out.append(Violation("energy_total", "charging would push state of charge above 1"))
        return out

    def resulting_soc(self, vehicle: VehicleState) -> float:
        return vehicle.soc + self.energy_total * vehicle.charge_efficiency / vehicle.battery_capacity

    @classmethod
    def idle(cls, slot_count: int, rationale: str = "") -> ChargingDecision:
        return cls(power=(0.0,) * slot_count, energy_total=0.0, cost_total=0.0, rationale=rationale)


@dataclass(frozen=True)
class DemandCurve:
    total: tuple[float, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "total", tuple(float(x) for x in self.total))
        bad = [Violation(f"total[{t}]", f"must be >= 0, got {x!r}") for t, x in enumerate(self.total) if not x >= 0]
        if bad:
            raise ValidationError(bad)

    def __len__(self) -> int:
        return len(self.total)


@dataclass(frozen=True)
class ScenarioConfig:
    grid: TimeGrid
    price_bounds: tuple[float, float]
    wholesale: WholesaleSchedule
    fixed_load: FixedLoadProfile
    users: tuple[tuple[UserProfile, VehicleState], ...] = ()
    temperature: float = 15.0
    seed: int = 0
    policy_kind: PolicyKind = PolicyKind.RULE

    def __post_init__(self) -> None:
        object.__setattr__(self, "users", tuple((p, v) for p, v in self.users))
        object.__setattr__(self, "price_bounds", tuple(self.price_bounds))
        if not isinstance(self.policy_kind, PolicyKind):
            try:
                object.__setattr__(self, "policy_kind", PolicyKind(self.policy_kind))
            except ValueError:
                pass  # reported by validate_scenario

    @property
    def n_users(self) -> int:
        return len(self.users)

    def schedule(self, prices: Iterable[float]) -> PriceSchedule:
        s = PriceSchedule(tuple(prices), self.price_bounds[0], self.price_bounds[1])
        s.check_length(self.grid)
        return s

    def environment(self, current_slot: int = 0) -> EnvironmentState:
        return EnvironmentState(self.grid, self.temperature, current_slot)


def mandatory_window_violation(
    profile: UserProfile, vehicle: VehicleState, grid: TimeGrid, prefix: str = "profile"
) -> Violation | None:
    """Report a user whose trip energy cannot fit into the preferred window."""
    mandatory = max(0.0, profile.required_soc_for_trip - vehicle.soc) * vehicle.battery_capacity / vehicle.charge_efficiency
    window_kwh = len(profile.preferred_window) * vehicle.max_charge_power * grid.slot_hours
    if window_kwh < mandatory - TOLERANCE:
        return Violation(
            f"{prefix}.preferred_window",
            f"window delivers at most {window_kwh:.3f} kWh but the trip needs {mandatory:.3f} kWh",
        )
    return None


def user_violations(profile: UserProfile, vehicle: VehicleState, grid: TimeGrid, index: int | None = None) -> list[Violation]:
    """Every per-user invariant, including window feasibility of the trip energy."""
    tag = "users" if index is None else f"users[{index}]"
    out = profile.violations(grid, f"{tag}.profile") + vehicle.violations(f"{tag}.vehicle")
    if not out:
        v = mandatory_window_violation(profile, vehicle, grid, f"{tag}.profile")
        if v is not None:
            out.append(v)
    return out


def validate_scenario(cfg: ScenarioConfig) -> ScenarioConfig:
    """Return ``cfg`` unchanged if every invariant holds.

    Raises:
        ValidationError: carrying one ``Violation`` per broken invariant.
    """
    out = cfg.grid.violations()
    lo, hi = (tuple(cfg.price_bounds) + (None, None))[:2]
    if len(cfg.price_bounds) != 2:
        out.append(Violation("price_bounds", "must be a pair (λ_min, λ_max)"))
    else:
        if not _is_number(lo) or lo <= 0:
            out.append(Violation("price_bounds.lower", "λ_min must be > 0"))
        if not _is_number(hi) or (_is_number(lo) and hi < lo):
            out.append(Violation("price_bounds.upper", "λ_max must be >= λ_min"))
    if out and any(v.field.startswith("grid") for v in out):
        raise ValidationError(out)  # per-slot checks are meaningless without a grid
    out += cfg.wholesale.violations(cfg.grid)
    out += cfg.fixed_load.violations(cfg.grid)
    seen: dict[str, int] = {}
    for i, pair in enumerate(cfg.users):
        profile, vehicle = pair
        out += user_violations(profile, vehicle, cfg.grid, i)
        if profile.user_id in seen:
            out.append(Violation(f"users[{i}].profile.user_id", f"duplicate of users[{seen[profile.user_id]}]"))
        seen.setdefault(profile.user_id, i)
    if not _is_number(cfg.temperature):
        out.append(Violation("temperature", f"must be a finite number, got {cfg.temperature!r}"))
    if not isinstance(cfg.seed, int) or isinstance(cfg.seed, bool) or not 0 <= cfg.seed < 2**64:
        out.append(Violation("seed", f"must be an unsigned 64-bit integer, got {cfg.seed!r}"))
    if not isinstance(cfg.policy_kind, PolicyKind):
        out.append(Violation("policy_kind", f"must be 'rule' or 'llm', got {cfg.policy_kind!r}"))
    if out:
        raise ValidationError(out)
    return cfg


# ---------------------------------------------------------------------------
# JSON scenario files
# ---------------------------------------------------------------------------

_PROFILE_FIELDS = (
    "user_id", "age", "occupation", "income_level", "residence",
    "environmental_awareness", "tech_acceptance", "risk_preference",
    "reservation_price", "preferred_window", "target_soc", "required_soc_for_trip",
)
_VEHICLE_FIELDS = ("battery_capacity", "soc", "max_charge_power", "charge_efficiency")


def profile_to_dict(p: UserProfile) -> dict[str, Any]:
    d = {name: getattr(p, name) for name in _PROFILE_FIELDS}
    d["income_level"] = p.income_level.value if isinstance(p.income_level, IncomeLevel) else p.income_level
    d["preferred_window"] = list(p.preferred_window)
    return d


def vehicle_to_dict(v: VehicleState) -> dict[str, Any]:
    return {name: getattr(v, name) for name in _VEHICLE_FIELDS}


def scenario_to_dict(cfg: ScenarioConfig) -> dict[str, Any]:
    return {
        "grid": {
            "start_hour": cfg.grid.start_hour,
            "slot_count": cfg.grid.slot_count,
            "slot_hours": cfg.grid.slot_hours,
        },
        "price_bounds": list(cfg.price_bounds),
        "wholesale": {"prices": list(cfg.wholesale.prices)},
        "fixed_load": {"load": list(cfg.fixed_load.load)},
        "users": [{"profile": profile_to_dict(p), "vehicle": vehicle_to_dict(v)} for p, v in cfg.users],
        "temperature": cfg.temperature,
        "seed": cfg.seed,
        "policy_kind": cfg.policy_kind.value if isinstance(cfg.policy_kind, PolicyKind) else cfg.policy_kind,
    }


class _Reader:
    """Pulls typed fields out of parsed JSON, recording problems instead of stopping."""

    def __init__(self) -> None:
        self.errors: list[Violation] = []

    def get(self, d: Any, key: str, path: str, default: Any = ...) -> Any:
        if isinstance(d, dict) and key in d:
            return d[key]
        if default is not ...:
            return default
        self.errors.append(Violation(f"{path}.{key}" if path else key, "missing required field"))
        return None

    def number(self, d: Any, key: str, path: str, default: Any = ...) -> float:
        v = self.get(d, key, path, default)
        if v is None:
            return math.nan
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            self.errors.append(Violation(f"{path}.{key}", f"must be a number, got {v!r}"))
            return math.nan
        return float(v)

    def integer(self, d: Any, key: str, path: str, default: Any = ...) -> int:
        v = self.get(d, key, path, default)
        if isinstance(v, float) and v.is_integer():
            v = int(v)
        if isinstance(v, bool) or not isinstance(v, int):
            if v is not None:
                self.errors.append(Violation(f"{path}.{key}", f"must be an integer, got {v!r}"))
            return -1
        return v

    def string(self, d: Any, key: str, path: str, default: Any = ...) -> str:
        v = self.get(d, key, path, default)
        if not isinstance(v, str):
            if v is not None:
                self.errors.append(Violation(f"{path}.{key}", f"must be a string, got {v!r}"))
            return ""
        return v

    def numbers(self, d: Any, key: str, path: str) -> tuple[float, ...]:
        v = self.get(d, key, path)
        if not isinstance(v, list):
            if v is not None:
                self.errors.append(Violation(f"{path}.{key}", "must be a list of numbers"))
            return ()
        out = []
        for i, x in enumerate(v):
            if isinstance(x, bool) or not isinstance(x, (int, float)):
                self.errors.append(Violation(f"{path}.{key}[{i}]", f"must be a number, got {x!r}"))
                out.append(math.nan)
            else:
                out.append(float(x))
        return tuple(out)


def profile_from_dict(d: Any, path: str = "profile", reader: _Reader | None = None) -> UserProfile:
    r = reader or _Reader()
    window = r.get(d, "preferred_window", path)
    if not isinstance(window, list) or not all(isinstance(s, int) and not isinstance(s, bool) for s in window):
        if window is not None:
            r.errors.append(Violation(f"{path}.preferred_window", "must be a list of slot indices"))
        window = []
    profile = UserProfile(
        user_id=r.string(d, "user_id", path),
        age=r.integer(d, "age", path),
        occupation=r.string(d, "occupation", path, ""),
        income_level=r.string(d, "income_level", path),
        residence=r.string(d, "residence", path, ""),
        environmental_awareness=r.number(d, "environmental_awareness", path),
        tech_acceptance=r.number(d, "tech_acceptance", path),
        risk_preference=r.number(d, "risk_preference", path),
        reservation_price=r.number(d, "reservation_price", path),
        preferred_window=tuple(window),
        target_soc=r.number(d, "target_soc", path),
        required_soc_for_trip=r.number(d, "required_soc_for_trip", path),
    )
    if reader is None and r.errors:
        raise ValidationError(r.errors)
    return profile


def vehicle_from_dict(d: Any, path: str = "vehicle", reader: _Reader | None = None) -> VehicleState:
    r = reader or _Reader()
    vehicle = VehicleState(
        battery_capacity=r.number(d, "battery_capacity", path),
        soc=r.number(d, "soc", path),
        max_charge_power=r.number(d, "max_charge_power", path),
        charge_efficiency=r.number(d, "charge_efficiency", path, 0.95),
    )
    if reader is None and r.errors:
        raise ValidationError(r.errors)
    return vehicle


def scenario_from_dict(d: Any) -> ScenarioConfig:
    """Parse and validate a scenario document.

    Raises:
        ValidationError: listing every structural and invariant problem found.
    """
    r = _Reader()
    if not isinstance(d, dict):
        raise ValidationError([Violation("scenario", "document must be a JSON object")])
    g = r.get(d, "grid", "")
    grid = TimeGrid(
        start_hour=r.integer(g, "start_hour", "grid"),
        slot_count=r.integer(g, "slot_count", "grid"),
        slot_hours=r.number(g, "slot_hours", "grid"),
    )
    bounds = r.get(d, "price_bounds", "")
    if isinstance(bounds, list) and len(bounds) == 2 and all(_is_number(b) for b in bounds):
        price_bounds = (float(bounds[0]), float(bounds[1]))
    else:
        if bounds is not None:
            r.errors.append(Violation("price_bounds", "must be a list [λ_min, λ_max] of numbers"))
        price_bounds = (math.nan, math.nan)
    wholesale = WholesaleSchedule(r.numbers(r.get(d, "wholesale", ""), "prices", "wholesale"))
    fixed = FixedLoadProfile(r.numbers(r.get(d, "fixed_load", ""), "load", "fixed_load"))
    raw_users = r.get(d, "users", "", [])
    users = []
    if not isinstance(raw_users, list):
        r.errors.append(Violation("users", "must be a list"))
        raw_users = []
    for i, u in enumerate(raw_users):
        users.append(
            (
                profile_from_dict(r.get(u, "profile", f"users[{i}]"), f"users[{i}].profile", r),
                vehicle_from_dict(r.get(u, "vehicle", f"users[{i}]"), f"users[{i}].vehicle", r),
            )
        )
    temperature = r.number(d, "temperature", "", 15.0)
    seed = r.get(d, "seed", "", 0)
    policy_kind = r.get(d, "policy_kind", "", "rule")
    if r.errors:
        raise ValidationError(r.errors)
    cfg = ScenarioConfig(
        grid=grid,
        price_bounds=price_bounds,
        wholesale=wholesale,
        fixed_load=fixed,
        users=tuple(users),
        temperature=temperature,
        seed=seed,
        policy_kind=policy_kind,
    )
    return validate_scenario(cfg)


def dumps_scenario(cfg: ScenarioConfig) -> str:
    return json.dumps(scenario_to_dict(cfg), indent=2, ensure_ascii=False) + "\n"


def load_scenario(path: str | Path) -> ScenarioConfig:
    with open(path, encoding="utf-8") as fh:
        return scenario_from_dict(json.load(fh))


def save_scenario(cfg: ScenarioConfig, path: str | Path) -> None:
    validate_scenario(cfg)
    Path(path).write_text(dumps_scenario(cfg), encoding="utf-8")

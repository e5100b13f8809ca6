import json
import logging
import math
from collections import Counter

import httpx
import pytest

from conftest import FIXTURES
from evdr.domain import TimeGrid, user_violations
from evdr.gateway import GatewayError, LLMGateway
from evdr.profilegen import (
    DEFAULT_PRICE_BOUNDS,
    build_persona_prompt,
    build_scenario,
    generate_llm_users,
    generate_synthetic_users,
    parse_persona_block,
    repair_persona,
    substream_seed,
)

GRID = TimeGrid()
LLM_STORE = FIXTURES / "llm"


def _replay():
    return LLMGateway(mode="replay", fixture_dir=LLM_STORE)


# synthetic users ---------------------------------------------------------------


def test_hundred_users_in_price_bounds():
    users = generate_synthetic_users(100, GRID, DEFAULT_PRICE_BOUNDS, seed=3)
    assert len(users) == 100
    assert all(0.09 <= p.reservation_price <= 0.22 for p, _ in users)


def test_zero_users():
    assert generate_synthetic_users(0, GRID, DEFAULT_PRICE_BOUNDS, seed=3) == []


def test_negative_count_rejected():
    with pytest.raises(ValueError):
        generate_synthetic_users(-1, GRID, DEFAULT_PRICE_BOUNDS, seed=3)


def test_same_seed_same_users():
    assert generate_synthetic_users(50, GRID, DEFAULT_PRICE_BOUNDS, 9) == generate_synthetic_users(50, GRID, DEFAULT_PRICE_BOUNDS, 9)
    assert generate_synthetic_users(50, GRID, DEFAULT_PRICE_BOUNDS, 9) != generate_synthetic_users(50, GRID, DEFAULT_PRICE_BOUNDS, 10)


@pytest.mark.parametrize("grid", [TimeGrid(), TimeGrid(0, 1, 1.0), TimeGrid(18, 6, 0.5), TimeGrid(0, 24, 1.0)])
def test_every_user_is_valid(grid):
    users = generate_synthetic_users(300, grid, DEFAULT_PRICE_BOUNDS, seed=1)
    for p, v in users:
        assert user_violations(p, v, grid) == []
        assert p.required_soc_for_trip <= p.target_soc
        w = p.preferred_window
        assert list(w) == list(range(w[0], w[-1] + 1))
        assert len(w) >= math.ceil(grid.slot_count / 2)


def test_distribution_ranges():
    users = generate_synthetic_users(2000, GRID, DEFAULT_PRICE_BOUNDS, seed=5)
    assert all(20 <= p.age <= 70 for p, _ in users)
    assert {v.battery_capacity for _, v in users} == {40.0, 50.0, 60.0, 75.0}
    assert {v.max_charge_power for _, v in users} == {7.4, 11.0, 22.0}
    assert all(0.1 <= v.soc <= 0.6 for _, v in users)
    assert all(0.7 <= p.target_soc <= 0.95 for p, _ in users)
    incomes = Counter(p.income_level.value for p, _ in users)
    assert incomes["medium"] > incomes["low"] > incomes["high"]
    full = sum(len(p.preferred_window) == 5 for p, _ in users) / len(users)
    assert 0.65 < full < 0.85  # 0.7 plus the share of sub-windows drawn at full length


def test_substreams_are_independent():
    assert substream_seed(1, "population") != substream_seed(1, "swarm")
    assert substream_seed(1, "swarm") == substream_seed(1, "swarm")
    assert substream_seed(1, "swarm") != substream_seed(2, "swarm")


def test_build_scenario_is_seeded():
    assert build_scenario(n=10, seed=4) == build_scenario(n=10, seed=4)
    assert build_scenario(n=10, seed=4).seed == 4


# personas ----------------------------------------------------------------------


def test_persona_prompt_golden_file():
    assert build_persona_prompt(5, GRID, DEFAULT_PRICE_BOUNDS, 11, 0) == (FIXTURES / "persona_prompt.txt").read_text(encoding="utf-8")


def test_parse_persona_block():
    assert parse_persona_block('x <personas>[{"a": 1}]</personas>') == [{"a": 1}]
    with pytest.raises(ValueError):
        parse_persona_block("no block")
    with pytest.raises(ValueError):
        parse_persona_block("<personas>{}</personas>")


def test_well_formed_fixture_gives_five_users_without_repairs():
    pop = generate_llm_users(5, _replay(), seed=11)
    assert len(pop.users) == 5
    assert (pop.repaired, pop.dropped, pop.topped_up, pop.gateway_failures) == (0, 0, 0, 0)
    assert [p.user_id for p, _ in pop.users] == ["p0", "p1", "p2", "p3", "p4"]
    assert all(user_violations(p, v, GRID) == [] for p, v in pop.users)


def test_age_250_clamped_to_70():
    pop = generate_llm_users(3, _replay(), seed=12)
    assert len(pop.users) == 3
    assert [p.age for p, _ in pop.users] == [30, 70, 40]
    assert pop.repaired == 1 and pop.repairs == [(1, ["age"])]
    assert pop.topped_up == 0


def test_gateway_down_gives_synthetic_users(tmp_path, caplog):
    gw = LLMGateway(mode="replay", fixture_dir=tmp_path)
    with caplog.at_level(logging.WARNING, logger="evdr"):
        pop = generate_llm_users(12, gw, seed=1)
    assert len(pop.users) == 12 and pop.topped_up == 12 and pop.gateway_failures == 2
    assert "synthetic" in caplog.text
    assert len({p.user_id for p, _ in pop.users}) == 12
    assert all(user_violations(p, v, GRID) == [] for p, v in pop.users)


def test_gateway_down_strict_raises(tmp_path):
    with pytest.raises(GatewayError):
        generate_llm_users(3, LLMGateway(mode="replay", fixture_dir=tmp_path), seed=1, strict=True)


def test_bad_records_dropped_and_topped_up():
    text = (
        "<personas>["
        '{"user_id": "a", "age": 30},'
        '"not an object",'
        '{"user_id": "b", "age": 40, "occupation": "chef", "income_level": "HIGH", "residence": "flat",'
        ' "environmental_awareness": 1.4, "tech_acceptance": 0.5, "risk_preference": 0.5,'
        ' "reservation_price": 0.5, "preferred_window": [0, 1, 9], "target_soc": 0.6,'
        ' "required_soc_for_trip": 0.9, "battery_capacity": 50, "soc": 0.3, "max_charge_power": 11}'
        "]</personas>"
    )
    gw = LLMGateway(
        endpoint="http://mock/v1",
        transport=httpx.MockTransport(
            lambda r: httpx.Response(200, json={"choices": [{"message": {"content": text}}]})
        ),
    )
    pop = generate_llm_users(4, gw, seed=2)
    assert len(pop.users) == 4
    assert pop.dropped == 2 and pop.topped_up == 3 and pop.repaired == 1
    (idx, fields), = pop.repairs
    assert idx == 2
    assert {"environmental_awareness", "reservation_price", "preferred_window", "required_soc_for_trip"} <= set(fields)
    p, _ = pop.users[0]
    assert p.income_level.value == "high"
    assert p.reservation_price == 0.22
    assert p.preferred_window == (0, 1)
    assert p.required_soc_for_trip == 0.6
    assert all(user_violations(p, v, GRID) == [] for p, v in pop.users)


def test_repair_rejects_missing_numbers():
    assert repair_persona({"age": "old"}, GRID, DEFAULT_PRICE_BOUNDS) is None
    assert repair_persona([1, 2], GRID, DEFAULT_PRICE_BOUNDS) is None


def test_duplicate_persona_ids_renamed():
    record = {
        "user_id": "same", "age": 40, "occupation": "x", "income_level": "low", "residence": "y",
        "environmental_awareness": 0.5, "tech_acceptance": 0.5, "risk_preference": 0.5,
        "reservation_price": 0.1, "preferred_window": [0, 1, 2, 3, 4], "target_soc": 0.8,
        "required_soc_for_trip": 0.4, "battery_capacity": 50, "soc": 0.3, "max_charge_power": 11,
    }
    text = "<personas>" + json.dumps([record, record]) + "</personas>"
    gw = LLMGateway(
        endpoint="http://mock/v1",
        transport=httpx.MockTransport(
            lambda r: httpx.Response(200, json={"choices": [{"message": {"content": text}}]})
        ),
    )
    pop = generate_llm_users(2, gw, seed=2)
    assert [p.user_id for p, _ in pop.users] == ["same", "llm-001"]

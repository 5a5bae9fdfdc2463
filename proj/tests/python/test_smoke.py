import json
import math
import os
from pathlib import Path

import pytest

import voltvar

DATA = Path(os.environ.get("VOLTVAR_DATA", Path(__file__).resolve().parents[2] / "data"))


@pytest.fixture(scope="module")
def tutorial():
    return voltvar.Feeder.tutorial()


@pytest.fixture(scope="module")
def morning(tutorial):
    return voltvar.Profiles.generate(tutorial, days=1, seed=3).slice(600, 660)


def test_bundled_feeder_matches_generator(tutorial):
    loaded = voltvar.Feeder.load(DATA / "feeders" / "tutorial_feeder.json")
    assert loaded.node_count == tutorial.node_count
    assert loaded.nodes == tutorial.nodes


def test_power_flow_is_near_nominal(tutorial, morning):
    sol = voltvar.solve(tutorial, morning, 0)
    assert len(sol.vmag_pu) == tutorial.node_count
    assert all(0.9 < v < 1.1 for v in sol.vmag_pu)
    assert sol.max_mismatch_pu <= 1e-8


def test_bad_feeder_raises_parse_error():
    with pytest.raises(voltvar.ParseError):
        voltvar.Feeder.parse("{")
    with pytest.raises(voltvar.VoltVarError):
        voltvar.Feeder.parse('{"buses": []}')


def test_headroom():
    assert voltvar.excess_capacity_kvar(500.0, 300.0) == pytest.approx(400.0)
    assert voltvar.excess_capacity_kvar(500.0, 600.0) == 0.0


def test_setpoint_mapping():
    assert voltvar.tap_to_setpoint(1, 1.0, 4.0, 0.75) == pytest.approx(121.625)
    with pytest.raises(voltvar.DomainError):
        voltvar.tap_to_setpoint(0, 1.2)


def test_example_problem_round_trip():
    text = (DATA / "problems" / "example_problem.json").read_text()
    plan, out = voltvar.optimize_json(text)
    doc = json.loads(out)
    assert plan.branch in ("strict", "relaxed")
    assert len(plan.predicted_v) == len(json.loads(text)["v0"])
    assert math.isfinite(plan.objective)
    assert doc


def test_train_and_simulate(tutorial, morning):
    history = voltvar.Profiles.generate(tutorial, days=3, step_minutes=15, seed=2)
    est = voltvar.train(tutorial, history, rows=3, cols=3)
    assert est.critical_nodes
    for case in ("none", "A", "D"):
        m = voltvar.simulate(tutorial, morning, case, est)
        assert m.label
        assert m.ntc >= 0
        assert m.total_cost == pytest.approx(m.q_cost + m.t_cost)
    with pytest.raises(voltvar.ValidationError):
        voltvar.simulate(tutorial, morning, "B")

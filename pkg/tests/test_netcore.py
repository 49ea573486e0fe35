import logging

import numpy as np
import pytest

from netcore.generator import (
    LANE_PROBS,
    SPEED_LIMIT_PROBS,
    generate_demand,
    generate_grid_network,
)
from netcore.network import (
    LANE_COUNTS,
    SPEED_LIMITS_KMH,
    DemandTable,
    Link,
    Network,
    ScenarioParseError,
    ScenarioValidationError,
    Trip,
)
from netcore.scenario_io import load_demand, load_network, load_scenario, save_demand, save_network

HEADER = "link_id,from_node,to_node,length_m,lanes,speed_limit_kmh\n"


def test_load_minimal_network(tmp_path):
    path = tmp_path / "net.csv"
    path.write_text(HEADER + "0,0,1,400,2,40\n", encoding="utf-8")
    network = load_network(path)
    assert network.nodes == (0, 1)
    assert len(network.links) == 1
    link = network.link(0)
    assert (link.length, link.lanes, link.speed_limit) == (400.0, 2, 40.0)
    assert link.free_flow_time == pytest.approx(36.0)
    assert network.out_links(0) == (0,) and network.in_links(1) == (0,)


def test_zero_lanes_rejected(tmp_path):
    path = tmp_path / "net.csv"
    path.write_text(HEADER + "0,0,1,400,0,40\n", encoding="utf-8")
    with pytest.raises(ScenarioValidationError):
        load_network(path)


def test_malformed_field_and_missing_column(tmp_path):
    bad_value = tmp_path / "bad.csv"
    bad_value.write_text(HEADER + "0,0,1,four hundred,2,40\n", encoding="utf-8")
    with pytest.raises(ScenarioParseError):
        load_network(bad_value)

    no_lanes = tmp_path / "short.csv"
    no_lanes.write_text("link_id,from_node,to_node,length_m,speed_limit_kmh\n0,0,1,400,40\n", encoding="utf-8")
    with pytest.raises(ScenarioParseError):
        load_network(no_lanes)


def test_duplicate_link_id_and_self_loop():
    with pytest.raises(ScenarioValidationError):
        Network.from_links([Link(0, 0, 1, 100.0, 1, 40.0), Link(0, 1, 0, 100.0, 1, 40.0)])
    with pytest.raises(ScenarioValidationError):
        Link(0, 3, 3, 100.0, 1, 40.0)


def test_grid_dimensions():
    network = generate_grid_network(6, 6, seed=1)
    assert len(network.nodes) == 36
    assert len(network.links) == 2 * (2 * 6 * 5)
    for link in network.links:
        assert 100.0 <= link.length <= 450.0
        assert link.lanes in LANE_COUNTS
        assert link.speed_limit in SPEED_LIMITS_KMH


def test_grid_needs_two_rows():
    with pytest.raises(ValueError):
        generate_grid_network(1, 6, seed=1)


def test_grid_round_trip_and_determinism(tmp_path):
    network = generate_grid_network(6, 6, seed=42)
    first = save_network(network, tmp_path / "a.csv")
    second = save_network(generate_grid_network(6, 6, seed=42), tmp_path / "b.csv")
    assert first.read_bytes() == second.read_bytes()
    assert load_network(first) == network


def test_attribute_marginals():
    limits, lanes = [], []
    for seed in range(30):
        network = generate_grid_network(10, 10, seed=seed)
        limits += [l.speed_limit for l in network.links]
        lanes += [l.lanes for l in network.links]
    assert len(limits) >= 10_000
    for value, p in zip(SPEED_LIMITS_KMH, SPEED_LIMIT_PROBS):
        assert abs(np.mean(np.array(limits) == value) - p) < 0.02
    for value, p in zip(LANE_COUNTS, LANE_PROBS):
        assert abs(np.mean(np.array(lanes) == value) - p) < 0.02


def test_uniform_demand_support():
    network = generate_grid_network(3, 3, seed=0)
    demand = generate_demand(network, 100, "uniform", 900.0, seed=5)
    assert len(demand) == 100
    assert all(0.0 <= t.departure_s <= 900.0 for t in demand.trips)
    assert all(t.origin != t.destination for t in demand.trips)
    assert generate_demand(network, 100, "uniform", 900.0, seed=5) == demand


def test_normal_demand_centered():
    network = generate_grid_network(3, 3, seed=0)
    horizon = 900.0
    demand = generate_demand(network, 4000, "normal", horizon, seed=11)
    departures = np.array([t.departure_s for t in demand.trips])
    assert departures.min() >= 0.0 and departures.max() <= horizon
    standard_error = departures.std() / np.sqrt(len(departures))
    assert abs(departures.mean() - horizon / 2) < 3 * standard_error


def test_demand_rejects_bad_arguments():
    network = generate_grid_network(2, 2, seed=0)
    with pytest.raises(ValueError):
        generate_demand(network, 0, "uniform", 900.0, seed=0)
    with pytest.raises(ValueError):
        generate_demand(network, 10, "poisson", 900.0, seed=0)


def test_demand_invariants():
    with pytest.raises(ScenarioValidationError):
        DemandTable(trips=(Trip(0, 0, 1, 0.0), Trip(0, 1, 0, 5.0)))
    with pytest.raises(ScenarioValidationError):
        DemandTable(trips=(Trip(0, 0, 1, -1.0),))
    with pytest.raises(ScenarioValidationError):
        DemandTable(trips=(Trip(0, 2, 2, 0.0),))


def test_unreachable_destination_rejected(tmp_path, single_link):
    save_network(single_link, tmp_path / "net.csv")
    save_demand(DemandTable(trips=(Trip(0, 1, 0, 0.0),)), tmp_path / "demand.csv")
    with pytest.raises(ScenarioValidationError):
        load_scenario(tmp_path / "net.csv", tmp_path / "demand.csv")


def test_demand_round_trip(tmp_path):
    network = generate_grid_network(3, 3, seed=2)
    demand = generate_demand(network, 50, "exponential", 600.0, seed=2)
    save_demand(demand, tmp_path / "demand.csv")
    assert load_demand(tmp_path / "demand.csv") == demand


def test_generator_log_messages(caplog):
    with caplog.at_level(logging.INFO, logger="netcore.generator"):
        network = generate_grid_network(2, 2, seed=1)
        generate_demand(network, 10, "uniform", 60.0, seed=1)
    messages = [r.getMessage() for r in caplog.records]
    assert any(m.startswith("Generated 2x2 grid: 4 nodes") for m in messages)
    assert any(m.startswith("Generated demand:") for m in messages)
    assert not any("—" in m for m in messages)

import math

import numpy as np
import pytest

from linkstate.costing import (
    CostingApproach,
    ghg_cost,
    ghg_cost_marginal,
    ghg_cost_sum,
    ghg_cost_sum_per_lane,
    ghg_cost_weighted,
    ghg_cost_weighted_per_lane,
    travel_time_cost,
)
from linkstate.records import (
    INTERVAL_S,
    EMPTY_SECOND,
    IntervalRecordError,
    LinkSecond,
    aggregate,
    attach_inlink_speeds,
    read_link_records,
    record_from_series,
    write_link_records,
)
from netcore.network import Link, Network


def series(values):
    return record_from_series(0, 0, values)


@pytest.fixture
def link():
    return Link(0, 0, 1, 500.0, 2, 60.0)


def test_empty_interval(link):
    rec = aggregate(link, 3, [EMPTY_SECOND] * INTERVAL_S, free_flow_er=1.2)
    assert rec.speed_kmh == 60.0
    assert rec.ghg_by_second == (0.0,) * INTERVAL_S
    assert rec.density_lane == 0.0 and rec.flow_vph == 0.0 and rec.delay_s == 0.0
    assert rec.ghg_er == 1.2
    assert ghg_cost_sum(rec) == 0.0


def test_single_vehicle_constant_speed(link):
    second = LinkSecond.from_vehicles([10.0], [0.5], [0.001])
    rec = aggregate(link, 0, [second] * INTERVAL_S)
    assert rec.speed_kmh == pytest.approx(36.0)
    assert rec.ghg_by_second == (0.5,) * INTERVAL_S
    assert rec.ghg_er == pytest.approx(0.5)
    # one vehicle present all minute on 0.5 km × 2 lanes
    assert rec.density_lane == pytest.approx(1.0)
    assert rec.nox_g == pytest.approx(0.06)


def test_two_vehicles_sum_cost(link):
    second = LinkSecond.from_vehicles([8.0, 12.0], [0.5, 0.5])
    rec = aggregate(link, 0, [second] * INTERVAL_S)
    assert ghg_cost_sum(rec) == pytest.approx(60.0)
    assert rec.ghg_er == pytest.approx(0.5)


def test_flow_and_delay_from_exits(link):
    seconds = [EMPTY_SECOND] * INTERVAL_S
    seconds[10] = LinkSecond.from_vehicles([12.0], [1.0], exit_travel_times=[40.0])
    seconds[20] = LinkSecond.from_vehicles([12.0], [1.0], exit_travel_times=[50.0])
    seconds[30] = LinkSecond.from_vehicles([12.0], [1.0], exit_travel_times=[60.0])
    rec = aggregate(link, 0, seconds)
    assert rec.flow_vph == 180.0
    assert rec.flow_lane_vph == 90.0
    assert rec.delay_s == pytest.approx(50.0 - link.free_flow_time)


def test_delay_floored_at_zero(link):
    seconds = [EMPTY_SECOND] * INTERVAL_S
    seconds[0] = LinkSecond.from_vehicles([16.0], [1.0], exit_travel_times=[20.0])
    assert aggregate(link, 0, seconds).delay_s == 0.0


def test_wrong_record_count(link):
    with pytest.raises(IntervalRecordError):
        aggregate(link, 0, [EMPTY_SECOND] * 59)


def test_sum_costs():
    assert ghg_cost_sum(series([1.0] * 60)) == pytest.approx(60.0)
    assert ghg_cost_sum_per_lane(series([100 / 60] * 60), 4) == pytest.approx(25.0)
    assert ghg_cost_sum_per_lane(series([1.0] * 60), 1) == ghg_cost_sum(series([1.0] * 60))


def test_per_lane_prefers_wider_link():
    a = series([70 / 60] * 60)
    b = series([100 / 60] * 60)
    assert ghg_cost_sum(a) < ghg_cost_sum(b)
    assert ghg_cost_sum_per_lane(a, 2) == pytest.approx(35.0)
    assert ghg_cost_sum_per_lane(b, 4) == pytest.approx(25.0)
    assert ghg_cost_sum_per_lane(b, 4) < ghg_cost_sum_per_lane(a, 2)


def test_weighted_costs():
    assert ghg_cost_weighted(series([1.0] * 60)) == pytest.approx(1.0)
    assert ghg_cost_weighted(series(range(1, 61))) == pytest.approx(73810 / 1830)
    last_only = [0.0] * 59 + [1.0]
    assert ghg_cost_weighted(series(last_only)) == pytest.approx(60 / 1830)
    assert ghg_cost_weighted_per_lane(series([1.0] * 60), 2) == pytest.approx(0.5)
    assert ghg_cost_weighted_per_lane(series([0.0] * 60), 3) == 0.0


def test_marginal_and_travel_time():
    assert ghg_cost_marginal(0.5, 36.0) == pytest.approx(18.0)
    assert ghg_cost_marginal(0.0, 36.0) == 0.0
    tt = travel_time_cost(400.0, 40.0)
    assert tt == pytest.approx(36.0)
    assert ghg_cost_marginal(1.0, tt) == pytest.approx(36.0)
    with pytest.raises(ValueError):
        ghg_cost_marginal(-0.1, 10.0)


def test_travel_time_floor_and_cap():
    floored = travel_time_cost(400.0, 0.0)
    assert math.isfinite(floored)
    assert floored == pytest.approx(travel_time_cost(400.0, 0.1))
    assert travel_time_cost(400.0, 0.0, cap_s=1800.0) == 1800.0
    link = Link(0, 0, 1, 250.0, 1, 30.0)
    assert travel_time_cost(link.length, link.speed_limit) == pytest.approx(link.free_flow_time)


def test_costs_match_naive_sums():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        g = rng.uniform(0.0, 6.0, size=60)
        lanes = int(rng.integers(1, 5))
        rec = series(g.tolist())
        total = 0.0
        weighted = 0.0
        for k in range(60):
            total += g[k]
            weighted += (k + 1) * g[k]
        weighted /= 60 * 61 / 2
        assert ghg_cost_sum(rec) == pytest.approx(total, rel=1e-12)
        assert ghg_cost_weighted(rec) == pytest.approx(weighted, rel=1e-12)
        assert ghg_cost_sum_per_lane(rec, lanes) == pytest.approx(total / lanes, rel=1e-12)
        assert ghg_cost_weighted_per_lane(rec, lanes) == pytest.approx(weighted / lanes, rel=1e-12)
        assert g.min() - 1e-12 <= ghg_cost_weighted(rec) <= g.max() + 1e-12


def test_sum_dominates_weighted_for_falling_series():
    falling = series(np.linspace(3.0, 0.5, 60).tolist())
    assert ghg_cost_sum(falling) >= ghg_cost_weighted(falling)
    constant = series([0.7] * 60)
    assert ghg_cost_sum(constant) == pytest.approx(60 * ghg_cost_weighted(constant))


def test_costing_dispatch():
    rec = record_from_series(0, 0, [1.0] * 60, ghg_er=0.5)
    assert ghg_cost(rec, 2, CostingApproach.SUM, 36.0) == pytest.approx(60.0)
    assert ghg_cost(rec, 2, CostingApproach.SUM_PER_LANE, 36.0) == pytest.approx(30.0)
    assert ghg_cost(rec, 2, CostingApproach.WEIGHTED, 36.0) == pytest.approx(1.0)
    assert ghg_cost(rec, 2, CostingApproach.WEIGHTED_PER_LANE, 36.0) == pytest.approx(0.5)
    assert ghg_cost(rec, 2, CostingApproach.MARGINAL, 36.0) == pytest.approx(18.0)
    assert CostingApproach.parse(" Weighted_Per_Lane ") is CostingApproach.WEIGHTED_PER_LANE
    with pytest.raises(ValueError):
        CostingApproach.parse("median")


def test_inlink_speed_is_mean_of_feeders():
    network = Network.from_links([
        Link(0, 0, 2, 200.0, 1, 40.0),
        Link(1, 1, 2, 200.0, 1, 40.0),
        Link(2, 2, 3, 200.0, 1, 40.0),
    ])
    records = [
        record_from_series(0, 0, [0.0] * 60, speed_kmh=20.0),
        record_from_series(1, 0, [0.0] * 60, speed_kmh=40.0),
        record_from_series(2, 0, [0.0] * 60, speed_kmh=35.0),
    ]
    by_link = {r.link_id: r for r in attach_inlink_speeds(records, network)}
    assert by_link[2].inlink_speed_kmh == pytest.approx(30.0)
    assert by_link[0].inlink_speed_kmh == 20.0


def test_link_record_files_keep_runs_apart(tmp_path, link):
    records = [aggregate(link, k, [EMPTY_SECOND] * INTERVAL_S) for k in range(3)]
    first = write_link_records(records, tmp_path / "a.csv")
    second = write_link_records(records, tmp_path / "b.csv")
    frame = read_link_records([first, second])
    assert len(frame) == 6
    assert sorted(frame["run_id"].unique()) == [0, 1]

import math

import numpy as np
import pytest

from forecast.predictors import identity_predictor
from microsim.idm import IdmParams, ballistic_update, idm_acceleration
from microsim.runner import run, simulate_free, trajectory_frame, vehicles_frame
from microsim.world import SimulationStalledError, World, step
from netcore.generator import generate_grid_network
from netcore.network import DemandTable
from routing.guidance import EMPTY_GUIDANCE, follow, rebuild_guidance
from routing.objectives import ObjectiveConfig, Strategy


def free_flow_guidance(network):
    return rebuild_guidance(network, {l.id: l.free_flow_time for l in network.links}, 0)


def drive(world, guidance, limit=10_000):
    retired = []
    while not world.done and world.clock.second < limit:
        result = world.step(guidance)
        retired += result.retired
        if result.interval_closed:
            world.close_interval()
    return retired


def test_idm_reference_points():
    p = IdmParams(v0=40 / 3.6)
    assert idm_acceleration(p.v0, None, None, p) == pytest.approx(0.0)
    assert idm_acceleration(0.0, None, None, p) == p.a_max
    assert idm_acceleration(0.0, 0.0, p.s0, p) == pytest.approx(0.0)
    assert idm_acceleration(5.0, 0.0, 3.0, p) < 0.0


def test_ballistic_update_never_reverses():
    v, disp = ballistic_update(1.0, -4.0, 11.0)
    assert v == 0.0
    assert disp == pytest.approx(0.125)
    assert ballistic_update(10.0, 3.0, 11.0)[0] == 11.0


def test_idm_params_validated():
    with pytest.raises(ValueError):
        IdmParams(s0=0.0)
    with pytest.raises(ValueError):
        IdmParams(delta=0.5)


def test_single_vehicle_matches_integrated_idm(single_link, one_trip, table):
    link = single_link.link(0)
    p = IdmParams().with_desired_speed(link.speed_limit_ms)
    v = x = 0.0
    moves = 0
    while x < link.length:
        a = p.a_max * (1.0 - (v / p.v0) ** p.delta)
        v_next = min(v + a, p.v0)
        x += (v + v_next) / 2.0
        v = v_next
        moves += 1

    world = World(single_link, one_trip(0, 1), table, check_invariants=True)
    (veh,) = drive(world, free_flow_guidance(single_link))
    assert veh.travel_time == moves + 1
    assert veh.arrival_s == moves + 1
    assert veh.travel_time > link.free_flow_time
    assert veh.distance == pytest.approx(link.length)
    assert veh.path == [0] and veh.entry_times == [1]
    assert veh.ghg_total > 0.0


def test_empty_world_only_advances_clock(single_link, table):
    world = World(single_link, DemandTable(trips=()), table)
    assert world.done
    step(world, EMPTY_GUIDANCE)
    assert world.clock.second == 1
    assert world.in_network == 0 and world.queued == 0
    with pytest.raises(ValueError):
        step(world, EMPTY_GUIDANCE, dt=0.5)


def test_queue_behind_blocked_leader_stays_put(chain_network, table):
    world = World(chain_network, DemandTable(trips=()), table, check_invariants=True)
    leader = world.place_vehicle(0, 0, 200.0, 0.0, destination=2)
    follower = world.place_vehicle(1, 0, 200.0 - 5.0 - 2.0, 0.0, destination=2)
    for _ in range(30):
        world.step(EMPTY_GUIDANCE)
    assert leader.position == 200.0 and leader.speed == 0.0
    assert follower.position == pytest.approx(193.0)
    assert follower.speed == 0.0


def test_approaching_queue_never_collides(chain_network, table):
    world = World(chain_network, DemandTable(trips=()), table, check_invariants=True)
    vehicles = [world.place_vehicle(k, 0, 150.0 - 30.0 * k, 8.0, destination=2) for k in range(4)]
    for _ in range(300):
        world.step(EMPTY_GUIDANCE)
    assert vehicles[0].position == 200.0
    for leader, follower in zip(vehicles, vehicles[1:]):
        assert leader.position - 5.0 - follower.position > 0.0
        assert follower.speed < 0.5


def test_guidance_change_applies_at_next_node(fork_network, one_trip, table):
    via_first = rebuild_guidance(fork_network, {0: 1.0, 1: 1.0, 2: 5.0}, 0)
    via_second = rebuild_guidance(fork_network, {0: 1.0, 1: 5.0, 2: 1.0}, 1)

    world = World(fork_network, one_trip(0, 2), table)
    for _ in range(5):
        world.step(via_first)
    (veh,) = world.vehicles()
    assert veh.path == [0]
    (done,) = drive(world, via_second)
    assert done.path == [0, 2]

    world = World(fork_network, one_trip(0, 2), table)
    while len(world.vehicles()[0].path) < 2:
        world.step(via_first)
    (done,) = drive(world, via_second)
    assert done.path == [0, 1]


def test_held_vehicle_trips_guard(single_link, one_trip, table):
    world = World(single_link, one_trip(0, 1), table, guard_multiple=1.0)
    with pytest.raises(SimulationStalledError):
        for _ in range(180):
            if world.step(EMPTY_GUIDANCE).interval_closed:
                world.close_interval()
    assert world.queued == 1


def test_shadow_interval_matches_next_interval(small_scenario, table):
    network, demand = small_scenario
    guidance = free_flow_guidance(network)
    world = World(network, demand, table)
    for _ in range(60):
        world.step(guidance)
    world.close_interval()

    predicted = world.shadow_interval(guidance)
    assert world.clock.second == 60
    for _ in range(60):
        world.step(guidance)
    actual = world.close_interval()
    assert [r.as_row() for r in predicted] == [r.as_row() for r in actual]
    assert [r.ghg_by_second for r in predicted] == [r.ghg_by_second for r in actual]


def test_run_conserves_vehicles_and_distance(small_scenario, table):
    network, demand = small_scenario
    log = run(network, demand, ObjectiveConfig(Strategy.TT_M), table, seed=1, check_invariants=True)
    assert len(log.vehicles) == len(demand)
    for v in log.vehicles:
        assert v.vkt_m == pytest.approx(sum(network.link(l).length for l in v.path))
        assert network.link(v.path[-1]).to_node == demand.trips[v.vehicle_id].destination
        assert v.tt_s >= len(v.path)
        assert list(v.entry_times) == sorted(v.entry_times)
    assert log.link_records
    assert all(r.speed_kmh <= network.link(r.link_id).speed_limit for r in log.link_records)


def test_run_is_deterministic(small_scenario, table):
    network, demand = small_scenario
    cfg = ObjectiveConfig(Strategy.TT_GHG_M)
    first = run(network, demand, cfg, table, seed=4)
    second = run(network, demand, cfg, table, seed=4)
    assert first.vehicles == second.vehicles
    assert first.guidance_flips == second.guidance_flips
    assert vehicles_frame(first).equals(vehicles_frame(second))


@pytest.mark.parametrize("myopic, anticipatory", [
    (Strategy.TT_M, Strategy.TT_A),
    (Strategy.GHG_M, Strategy.GHG_A),
    (Strategy.TT_GHG_M, Strategy.TT_GHG_A),
])
def test_identity_prediction_reproduces_myopic_run(small_scenario, table, myopic, anticipatory):
    network, demand = small_scenario
    identity = ObjectiveConfig(
        anticipatory,
        speed_model=identity_predictor("speed"),
        ghg_model=identity_predictor("ghg_er"),
    )
    reference = run(network, demand, ObjectiveConfig(myopic), table, seed=2, record_trajectories=True)
    predicted = run(network, demand, identity, table, seed=2, record_trajectories=True)
    assert predicted.vehicles == reference.vehicles
    assert trajectory_frame(predicted).to_csv(index=False) == trajectory_frame(reference).to_csv(index=False)
    assert predicted.guidance_flips == reference.guidance_flips


def test_trajectories_recorded_on_request(single_link, one_trip, table):
    log = run(single_link, one_trip(0, 1), ObjectiveConfig(Strategy.TT_M), table, record_trajectories=True)
    (veh,) = log.vehicles
    frame = trajectory_frame(log)
    assert len(frame) == veh.tt_s - 1
    assert frame["position_m"].iloc[-1] == pytest.approx(400.0)
    assert frame["position_m"].is_monotonic_increasing
    assert frame["speed_ms"].between(0.0, 40 / 3.6 + 1e-9).all()
    assert (frame["vehicle_id"] == veh.vehicle_id).all()


def test_simulate_free_stops_after_seconds(small_scenario, table):
    network, demand = small_scenario
    world = simulate_free(network, demand, table, free_flow_guidance(network), seconds=90)
    assert world.clock.second == 90
    assert world.departed == world.in_network + world.queued + world.retired


@pytest.mark.slow
def test_replications_vary_but_agree(small_scenario, table):
    network, demand = small_scenario
    means = []
    for seed in range(1, 6):
        log = run(network, demand, ObjectiveConfig(Strategy.TT_M), table, seed=seed)
        means.append(np.mean([v.tt_s for v in log.vehicles]))
    assert len(set(means)) > 1
    assert np.std(means) / np.mean(means) < 0.2
    assert all(math.isfinite(m) for m in means)


def test_lone_vehicle_follows_free_flow_route(one_trip, table):
    network = generate_grid_network(4, 4, seed=12)
    log = run(network, one_trip(0, 15), ObjectiveConfig(Strategy.TT_M), table, seed=3)
    (veh,) = log.vehicles
    assert list(veh.path) == follow(network, free_flow_guidance(network), 0, 15)

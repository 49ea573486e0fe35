import copy
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Deque, Dict, List, Optional, Sequence, Tuple

import networkx as nx

from emissions.opmode import OpModeTable, cruise_rates, emission_rates
from linkstate.records import (
    EMPTY_SECOND,
    INTERVAL_S,
    LinkIntervalRecord,
    LinkSecond,
    aggregate,
    attach_inlink_speeds,
)
from microsim.idm import VEHICLE_LENGTH_M, IdmParams, ballistic_update, idm_acceleration
from netcore.network import DemandTable, Network
from routing.guidance import GuidanceTable, Hop, next_link
from utils.logger import get_logger

logger = get_logger(__name__)

DEFAULT_GUARD_MULTIPLE = 50.0
MIN_GAP_M = 0.1          # closest a follower is ever placed behind its leader
SPEED_TOLERANCE = 1e-9


class SimulationStalledError(RuntimeError):
    """A vehicle exceeded the non-termination guard."""


class InvariantViolation(AssertionError):
    """Conservation, collision, speed-bound or distance check failed."""


@dataclass(slots=True)
class VehicleState:
    vehicle_id: int
    origin: int
    destination: int
    departure_s: float
    link_id: Optional[int] = None
    lane: int = 0
    position: float = 0.0        # meters from link start, front bumper
    speed: float = 0.0           # m/s
    acceleration: float = 0.0    # m/s²
    travel_time: int = 0         # seconds since joining the origin buffer
    distance: float = 0.0        # meters driven
    ghg_gps: float = 0.0
    nox_gps: float = 0.0
    ghg_total: float = 0.0
    nox_total: float = 0.0
    link_entry_s: int = 0
    arrival_s: Optional[int] = None
    path: List[int] = field(default_factory=list)
    entry_times: List[int] = field(default_factory=list)


@dataclass
class SimClock:
    second: int = 0

    @property
    def interval(self) -> int:
        return self.second // INTERVAL_S


# (second, vehicle_id, link_id, lane, position, speed, acceleration, ghg_gps, nox_gps)
TrajectoryRow = Tuple[int, int, int, int, float, float, float, float, float]


@dataclass
class StepResult:
    retired: List[VehicleState]
    trajectory: List[TrajectoryRow]
    interval_closed: bool


class World:
    """
    Mutable state of one simulation: vehicles on link lanes, origin buffers, pending
    departures, and the per-second link samples of the open interval.
    """

    def __init__(
        self,
        network: Network,
        demand: DemandTable,
        table: OpModeTable,
        idm: IdmParams = IdmParams(),
        guard_multiple: float = DEFAULT_GUARD_MULTIPLE,
        check_invariants: bool = False,
        record_trajectories: bool = False,
    ):
        self.network = network
        self.table = table
        self.clock = SimClock()
        self.check_invariants = check_invariants
        self.record_trajectories = record_trajectories

        self._idm = {l.id: idm.with_desired_speed(l.speed_limit_ms) for l in network.links}
        self._free_flow_er = {l.id: cruise_rates(l.speed_limit_ms, table)[0] for l in network.links}
        self.lanes: Dict[int, List[List[VehicleState]]] = {
            l.id: [[] for _ in range(l.lanes)] for l in network.links
        }
        self.origin_queues: Dict[int, Deque[VehicleState]] = {n: deque() for n in network.nodes}

        pending = [
            VehicleState(t.vehicle_id, t.origin, t.destination, t.departure_s)
            for t in demand.trips
        ]
        pending.sort(key=lambda v: (math.ceil(v.departure_s), v.vehicle_id))
        self._pending = pending
        self._next_pending = 0
        self.total_vehicles = len(pending)
        self.departed = 0
        self.retired = 0

        self._seconds: Dict[int, List[LinkSecond]] = {l.id: [] for l in network.links}
        self._guard = self._guard_limits(demand, guard_multiple)

    # --- setup helpers -------------------------------------------------------------

    def _guard_limits(self, demand: DemandTable, multiple: float) -> Dict[int, float]:
        reverse = self.network.to_digraph().reverse(copy=False)
        limits: Dict[int, float] = {}
        by_dest: Dict[int, Dict[int, float]] = {}
        for trip in demand.trips:
            if trip.destination not in by_dest:
                by_dest[trip.destination] = nx.single_source_dijkstra_path_length(reverse, trip.destination)
            free_flow = by_dest[trip.destination].get(trip.origin, math.inf)
            limits[trip.vehicle_id] = multiple * max(free_flow, float(INTERVAL_S))
        return limits

    def place_vehicle(
        self,
        vehicle_id: int,
        link_id: int,
        position: float,
        speed: float,
        destination: int,
        lane: int = 0,
    ) -> VehicleState:
        """Put a vehicle directly on a link, behind everything already in that lane."""
        link = self.network.link(link_id)
        veh = VehicleState(vehicle_id, link.from_node, destination, float(self.clock.second))
        veh.link_id, veh.lane, veh.position, veh.speed = link_id, lane, position, speed
        veh.link_entry_s = self.clock.second
        veh.path.append(link_id)
        veh.entry_times.append(self.clock.second)
        self.lanes[link_id][lane].append(veh)
        self.lanes[link_id][lane].sort(key=lambda v: -v.position)
        self.total_vehicles += 1
        self.departed += 1
        self._guard[vehicle_id] = math.inf
        return veh

    # --- queries -------------------------------------------------------------------

    @property
    def done(self) -> bool:
        return self.retired == self.total_vehicles

    @property
    def in_network(self) -> int:
        return sum(len(lane) for lanes in self.lanes.values() for lane in lanes)

    @property
    def queued(self) -> int:
        return sum(len(q) for q in self.origin_queues.values())

    def vehicles(self) -> List[VehicleState]:
        out = [v for lanes in self.lanes.values() for lane in lanes for v in lane]
        out += [v for q in self.origin_queues.values() for v in q]
        return sorted(out, key=lambda v: v.vehicle_id)

    # --- lane entry ----------------------------------------------------------------

    def _entry_gap(self, lane: List[VehicleState]) -> float:
        if not lane:
            return math.inf
        return lane[-1].position - VEHICLE_LENGTH_M

    def _try_enter(self, veh: VehicleState, link_id: int, speed: float) -> bool:
        """Least-occupied lane of link_id; enters only if that lane's entry gap exceeds s0."""
        lanes = self.lanes[link_id]
        idx = min(range(len(lanes)), key=lambda i: (len(lanes[i]), -self._entry_gap(lanes[i]), i))
        p = self._idm[link_id]
        if self._entry_gap(lanes[idx]) <= p.s0:
            return False
        entered_at = self.clock.second + 1
        veh.link_id, veh.lane, veh.position = link_id, idx, 0.0
        veh.speed = min(speed, p.v0)
        veh.link_entry_s = entered_at
        veh.path.append(link_id)
        veh.entry_times.append(entered_at)
        lanes[idx].append(veh)
        return True

    # --- the second-by-second update -----------------------------------------------

    def step(self, guidance: GuidanceTable) -> StepResult:
        s = self.clock.second
        network = self.network
        moved: List[Tuple[VehicleState, int, float]] = []

        # car-following: accelerations from the start-of-second snapshot, then moves front to back
        for link_id, lanes in self.lanes.items():
            p = self._idm[link_id]
            length = network.link(link_id).length
            for lane in lanes:
                if not lane:
                    continue
                accels = []
                leader = None
                for veh in lane:
                    if leader is None:
                        accels.append(idm_acceleration(veh.speed, None, None, p))
                    else:
                        gap = leader.position - VEHICLE_LENGTH_M - veh.position
                        accels.append(idm_acceleration(veh.speed, leader.speed, gap, p))
                    leader = veh

                ahead_pos = ahead_speed = None
                for veh, a in zip(lane, accels):
                    v_old = veh.speed
                    v_new, disp = ballistic_update(v_old, a, p.v0)
                    new_pos = veh.position + disp
                    if ahead_pos is not None:
                        bound = max(veh.position, ahead_pos - VEHICLE_LENGTH_M - MIN_GAP_M)
                        if new_pos > bound:
                            new_pos = bound
                            v_new = min(v_new, ahead_speed)
                    new_pos = min(new_pos, length)
                    veh.distance += new_pos - veh.position
                    veh.position, veh.speed = new_pos, v_new
                    veh.travel_time += 1
                    moved.append((veh, link_id, v_old))
                    ahead_pos, ahead_speed = new_pos, v_new

        # node transfers and arrivals, front vehicles only
        exits: Dict[int, List[float]] = {}
        retired: List[VehicleState] = []
        for link_id, lanes in self.lanes.items():
            link = network.link(link_id)
            for lane in lanes:
                if not lane or lane[0].position < link.length:
                    continue
                veh = lane[0]
                on_link_s = float(s + 1 - veh.link_entry_s)
                leaving = False
                if link.to_node == veh.destination:
                    veh.arrival_s = s + 1
                    retired.append(veh)
                    leaving = True
                else:
                    hop = next_link(link.to_node, veh.destination, guidance)
                    if isinstance(hop, int) and self._try_enter(veh, hop, veh.speed):
                        leaving = True
                    else:
                        veh.speed = 0.0
                if leaving:
                    lane.pop(0)
                    exits.setdefault(link_id, []).append(on_link_s)

        # emissions and link samples, attributed to the link driven during this second
        samples: Dict[int, List[float]] = {}
        trajectory: List[TrajectoryRow] = []
        for veh, link_id, v_old in moved:
            veh.acceleration = veh.speed - v_old
            ghg, nox = emission_rates(veh.speed, veh.acceleration, self.table)
            veh.ghg_gps, veh.nox_gps = ghg, nox
            veh.ghg_total += ghg
            veh.nox_total += nox
            acc = samples.setdefault(link_id, [0, 0.0, 0.0, 0.0])
            acc[0] += 1
            acc[1] += veh.speed
            acc[2] += ghg
            acc[3] += nox
            if self.record_trajectories:
                trajectory.append(
                    (s, veh.vehicle_id, link_id, veh.lane, veh.position, veh.speed, veh.acceleration, ghg, nox)
                )

        for link_id, series in self._seconds.items():
            acc = samples.get(link_id)
            left = exits.get(link_id)
            if acc is None and left is None:
                series.append(EMPTY_SECOND)
                continue
            count, speed_sum, ghg, nox = acc if acc is not None else (0, 0.0, 0.0, 0.0)
            series.append(
                LinkSecond(
                    count=count,
                    speed_sum=speed_sum,
                    ghg_g=ghg,
                    nox_g=nox,
                    exits=len(left) if left else 0,
                    exit_tt_sum=sum(left) if left else 0.0,
                )
            )

        # departures join their origin buffer, then buffers inject where the entry gap allows
        while self._next_pending < len(self._pending):
            veh = self._pending[self._next_pending]
            if math.ceil(veh.departure_s) > s:
                break
            self.origin_queues[veh.origin].append(veh)
            self._next_pending += 1
            self.departed += 1

        for node in sorted(self.origin_queues):
            queue = self.origin_queues[node]
            if not queue:
                continue
            waiting: Deque[VehicleState] = deque()
            for veh in queue:
                veh.travel_time += 1
                hop = next_link(node, veh.destination, guidance)
                if not (isinstance(hop, int) and self._try_enter(veh, hop, 0.0)):
                    waiting.append(veh)
            self.origin_queues[node] = waiting

        self.retired += len(retired)
        self.clock.second += 1

        if self.check_invariants:
            self.assert_invariants(retired)

        return StepResult(
            retired=retired,
            trajectory=trajectory,
            interval_closed=self.clock.second % INTERVAL_S == 0,
        )

    # --- intervals -----------------------------------------------------------------

    def close_interval(self) -> List[LinkIntervalRecord]:
        """Aggregate the finished minute of every link; pads a partial last minute with empty seconds."""
        open_seconds = len(next(iter(self._seconds.values()), []))
        if open_seconds == 0:
            return []
        for series in self._seconds.values():
            series.extend([EMPTY_SECOND] * (INTERVAL_S - len(series)))
        interval = (self.clock.second - 1) // INTERVAL_S
        records = [
            aggregate(self.network.link(link_id), interval, series, self._free_flow_er[link_id])
            for link_id, series in self._seconds.items()
        ]
        self._seconds = {link_id: [] for link_id in self._seconds}
        self._check_guard()
        return attach_inlink_speeds(records, self.network)

    def shadow_interval(self, guidance: GuidanceTable) -> List[LinkIntervalRecord]:
        """
        Records of the next interval, taken from a copy of this world run 60 s ahead with
        the given guidance frozen. The world itself is left untouched.
        """
        shadow = copy.deepcopy(self, memo={id(self.network): self.network, id(self.table): self.table})
        shadow.check_invariants = False
        shadow.record_trajectories = False
        for _ in range(INTERVAL_S):
            shadow.step(guidance)
        return shadow.close_interval()

    def _check_guard(self) -> None:
        for veh in self.vehicles():
            if veh.travel_time > self._guard[veh.vehicle_id]:
                where = f"link {veh.link_id} at {veh.position:.1f} m" if veh.link_id is not None else f"origin buffer {veh.origin}"
                message = (
                    f"Vehicle {veh.vehicle_id} ({veh.origin}→{veh.destination}) still travelling after "
                    f"{veh.travel_time} s, guard {self._guard[veh.vehicle_id]:.0f} s, now on {where}; "
                    f"{self.in_network} in network, {self.queued} queued at second {self.clock.second}"
                )
                logger.error(message)
                raise SimulationStalledError(message)

    # --- invariants ----------------------------------------------------------------

    def assert_invariants(self, retired: Sequence[VehicleState] = ()) -> None:
        in_network, queued = self.in_network, self.queued
        if self.departed != in_network + queued + self.retired:
            raise InvariantViolation(
                f"Second {self.clock.second}: departed {self.departed} != "
                f"in network {in_network} + queued {queued} + retired {self.retired}"
            )
        for link_id, lanes in self.lanes.items():
            link = self.network.link(link_id)
            v0 = self._idm[link_id].v0
            for idx, lane in enumerate(lanes):
                for veh in lane:
                    if not (-SPEED_TOLERANCE <= veh.speed <= v0 + SPEED_TOLERANCE):
                        raise InvariantViolation(f"Vehicle {veh.vehicle_id}: speed {veh.speed} outside [0, {v0}]")
                    if not (0.0 <= veh.position <= link.length):
                        raise InvariantViolation(f"Vehicle {veh.vehicle_id}: position {veh.position} off link {link_id}")
                for leader, follower in zip(lane, lane[1:]):
                    gap = leader.position - VEHICLE_LENGTH_M - follower.position
                    if not gap > 0:
                        raise InvariantViolation(
                            f"Collision on link {link_id} lane {idx}: vehicles {leader.vehicle_id}/{follower.vehicle_id} gap {gap}"
                        )
        for veh in retired:
            driven = math.fsum(self.network.link(l).length for l in veh.path)
            if abs(veh.distance - driven) > 1e-6 * max(1.0, driven):
                raise InvariantViolation(f"Vehicle {veh.vehicle_id}: distance {veh.distance} != path length {driven}")


def step(world: World, guidance: GuidanceTable, dt: float = 1.0) -> World:
    """Advance the world by one second."""
    if dt != 1.0:
        raise ValueError("The simulation runs at a fixed 1 s step")
    world.step(guidance)
    return world

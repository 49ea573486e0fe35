import math
import time
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from emissions.opmode import OpModeTable
from linkstate.records import INTERVAL_S, LinkIntervalRecord
from microsim.idm import IdmParams
from microsim.world import DEFAULT_GUARD_MULTIPLE, TrajectoryRow, VehicleState, World
from netcore.network import DemandTable, Network
from routing.controller import RoutingController, routing_loop
from routing.guidance import GuidanceTable
from routing.objectives import ObjectiveConfig
from utils.logger import get_logger

logger = get_logger(__name__)

DEFAULT_JITTER_S = 10.0

VEHICLE_COLUMNS = ["vehicle_id", "departure_s", "arrival_s", "tt_s", "vkt_m", "ghg_g", "nox_g", "path"]
SERIES_COLUMNS = ["minute", "avg_speed_kmh", "ghg_g", "nox_g"]
TRAJECTORY_COLUMNS = ["second", "vehicle_id", "link_id", "lane", "position_m", "speed_ms", "accel_ms2", "ghg_gps", "nox_gps"]


@dataclass(frozen=True)
class VehicleSummary:
    vehicle_id: int
    departure_s: float
    arrival_s: int
    tt_s: int
    vkt_m: float
    ghg_g: float
    nox_g: float
    path: Tuple[int, ...]
    entry_times: Tuple[int, ...]

    @classmethod
    def from_state(cls, veh: VehicleState) -> "VehicleSummary":
        return cls(
            vehicle_id=veh.vehicle_id,
            departure_s=veh.departure_s,
            arrival_s=veh.arrival_s,
            tt_s=veh.travel_time,
            vkt_m=veh.distance,
            ghg_g=veh.ghg_total,
            nox_g=veh.nox_total,
            path=tuple(veh.path),
            entry_times=tuple(veh.entry_times),
        )


@dataclass(frozen=True)
class NetworkMinute:
    minute: int
    avg_speed_kmh: float    # vehicle-second weighted over links; NaN when the network is empty
    ghg_g: float
    nox_g: float


@dataclass
class SimulationLog:
    label: str
    seed: int
    vehicles: List[VehicleSummary] = field(default_factory=list)
    link_records: List[LinkIntervalRecord] = field(default_factory=list)
    guidance_flips: List[int] = field(default_factory=list)
    guidance_history: List[GuidanceTable] = field(default_factory=list)
    trajectory: List[TrajectoryRow] = field(default_factory=list)
    duration_s: int = 0

    def network_series(self) -> List[NetworkMinute]:
        return network_series(self.link_records)


def network_series(records: Sequence[LinkIntervalRecord]) -> List[NetworkMinute]:
    by_minute = {}
    for rec in records:
        by_minute.setdefault(rec.interval, []).append(rec)
    series = []
    for minute in sorted(by_minute):
        recs = by_minute[minute]
        vehicle_s = sum(r.vehicle_seconds for r in recs)
        speed = math.fsum(r.speed_kmh * r.vehicle_seconds for r in recs) / vehicle_s if vehicle_s else math.nan
        series.append(
            NetworkMinute(
                minute=minute,
                avg_speed_kmh=speed,
                ghg_g=math.fsum(r.ghg_g for r in recs),
                nox_g=math.fsum(r.nox_g for r in recs),
            )
        )
    return series


def jitter_departures(demand: DemandTable, seed: int, jitter_s: float = DEFAULT_JITTER_S) -> DemandTable:
    """Shift every departure by U[0, jitter_s) drawn from the seed; the same seed gives the same shifts."""
    if jitter_s < 0:
        raise ValueError(f"departure jitter must be >= 0, got {jitter_s}")
    if jitter_s == 0:
        return demand
    offsets = np.random.default_rng(seed).uniform(0.0, jitter_s, size=len(demand.trips))
    return DemandTable(tuple(replace(t, departure_s=t.departure_s + float(o)) for t, o in zip(demand.trips, offsets)))


def run(
    network: Network,
    demand: DemandTable,
    cfg: ObjectiveConfig,
    table: OpModeTable,
    seed: int = 0,
    idm: IdmParams = IdmParams(),
    guard_multiple: float = DEFAULT_GUARD_MULTIPLE,
    departure_jitter_s: float = DEFAULT_JITTER_S,
    check_invariants: bool = False,
    record_trajectories: bool = False,
    keep_guidance: bool = False,
) -> SimulationLog:
    """Simulate one (strategy, seed) cell until every vehicle has arrived."""
    world = World(
        network,
        jitter_departures(demand, seed, departure_jitter_s),
        table,
        idm=idm,
        guard_multiple=guard_multiple,
        check_invariants=check_invariants,
        record_trajectories=record_trajectories,
    )
    controller = RoutingController(network, cfg, table, check_loops=check_invariants)
    log = SimulationLog(label=cfg.label, seed=seed)

    def on_step(result):
        log.vehicles.extend(VehicleSummary.from_state(v) for v in result.retired)
        log.trajectory.extend(result.trajectory)

    def on_interval(records, guidance):
        log.link_records.extend(records)
        if keep_guidance:
            log.guidance_history.append(guidance)

    logger.info(f"Simulating {cfg.label}, seed {seed}: {world.total_vehicles} vehicles on {len(network.links)} links")
    started = time.perf_counter()
    routing_loop(world, controller, on_step=on_step, on_interval=on_interval)
    log.duration_s = world.clock.second
    log.guidance_flips = list(controller.flips)
    log.vehicles.sort(key=lambda v: v.vehicle_id)
    logger.info(
        f"Finished {cfg.label}, seed {seed}: {len(log.vehicles)} arrivals in {log.duration_s} simulated s "
        f"({math.ceil(log.duration_s / INTERVAL_S)} intervals, {time.perf_counter() - started:.1f} s wall)"
    )
    return log


def vehicles_frame(log: SimulationLog) -> pd.DataFrame:
    rows = [
        {
            "vehicle_id": v.vehicle_id,
            "departure_s": v.departure_s,
            "arrival_s": v.arrival_s,
            "tt_s": v.tt_s,
            "vkt_m": v.vkt_m,
            "ghg_g": v.ghg_g,
            "nox_g": v.nox_g,
            "path": ";".join(str(l) for l in v.path),
        }
        for v in log.vehicles
    ]
    return pd.DataFrame(rows, columns=VEHICLE_COLUMNS)


def series_frame(log: SimulationLog) -> pd.DataFrame:
    return pd.DataFrame([vars(m) for m in log.network_series()], columns=SERIES_COLUMNS)


def trajectory_frame(log: SimulationLog) -> pd.DataFrame:
    return pd.DataFrame(log.trajectory, columns=TRAJECTORY_COLUMNS)


def simulate_free(
    network: Network,
    demand: DemandTable,
    table: OpModeTable,
    guidance: GuidanceTable,
    seconds: Optional[int] = None,
    **world_options,
) -> World:
    """Run a world under fixed guidance, for scripted scenarios; stops when done or after seconds."""
    world = World(network, demand, table, **world_options)
    while not world.done and (seconds is None or world.clock.second < seconds):
        if world.step(guidance).interval_closed:
            world.close_interval()
    return world

import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Dict, Iterable, List, Sequence, Tuple, Union

import pandas as pd

from linkstate.costing import travel_time_cost
from netcore.network import Link, Network
from utils.file_utils import read_frame_csv, write_frame_csv

INTERVAL_S = 60

LINK_RECORD_COLUMNS = [
    "link_id", "interval", "V_kmh", "density_lane", "flow_vph", "delay_s", "ghg_g", "nox_g",
    "inlink_mean_V_kmh", "vehicle_s", "ghg_er_gps", "flow_lane_vph",
]

PathLike = Union[str, Path]


class IntervalRecordError(ValueError):
    """An interval was aggregated from the wrong number of seconds."""


@dataclass(frozen=True)
class LinkSecond:
    """What the vehicles on one link did during one second, summed over vehicles."""

    count: int = 0
    speed_sum: float = 0.0      # m/s
    ghg_g: float = 0.0
    nox_g: float = 0.0
    exits: int = 0
    exit_tt_sum: float = 0.0    # seconds spent on the link by the vehicles that left

    @classmethod
    def from_vehicles(
        cls,
        speeds: Sequence[float],
        ghg: Sequence[float],
        nox: Sequence[float] = (),
        exit_travel_times: Sequence[float] = (),
    ) -> "LinkSecond":
        return cls(
            count=len(speeds),
            speed_sum=float(sum(speeds)),
            ghg_g=float(sum(ghg)),
            nox_g=float(sum(nox)),
            exits=len(exit_travel_times),
            exit_tt_sum=float(sum(exit_travel_times)),
        )


EMPTY_SECOND = LinkSecond()


@dataclass(frozen=True)
class LinkIntervalRecord:
    link_id: int
    interval: int
    speed_kmh: float
    density_lane: float         # veh / (km·lane)
    flow_vph: float
    delay_s: float
    ghg_by_second: Tuple[float, ...]
    nox_g: float
    vehicle_seconds: int
    ghg_er: float               # g/s per vehicle
    flow_lane_vph: float
    inlink_speed_kmh: float = math.nan

    @property
    def ghg_g(self) -> float:
        return math.fsum(self.ghg_by_second)

    def as_row(self) -> Dict[str, float]:
        return {
            "link_id": self.link_id,
            "interval": self.interval,
            "V_kmh": self.speed_kmh,
            "density_lane": self.density_lane,
            "flow_vph": self.flow_vph,
            "delay_s": self.delay_s,
            "ghg_g": self.ghg_g,
            "nox_g": self.nox_g,
            "inlink_mean_V_kmh": self.inlink_speed_kmh,
            "vehicle_s": self.vehicle_seconds,
            "ghg_er_gps": self.ghg_er,
            "flow_lane_vph": self.flow_lane_vph,
        }


def aggregate(
    link: Link,
    interval: int,
    seconds: Sequence[LinkSecond],
    free_flow_er: float = 0.0,
) -> LinkIntervalRecord:
    """
    Close one minute of a link. Speed is the arithmetic mean over vehicle-second samples;
    an interval without vehicles reports the speed limit, zero emissions and, as its
    emission rate, free_flow_er (the rate of a vehicle cruising at the limit).
    """
    if len(seconds) != INTERVAL_S:
        raise IntervalRecordError(
            f"Link {link.id} interval {interval}: expected {INTERVAL_S} seconds of records, got {len(seconds)}"
        )

    vehicle_seconds = sum(s.count for s in seconds)
    exits = sum(s.exits for s in seconds)
    ghg_by_second = tuple(s.ghg_g for s in seconds)
    nox = math.fsum(s.nox_g for s in seconds)

    if vehicle_seconds == 0:
        speed = link.speed_limit
        ghg_er = free_flow_er
    else:
        mean_ms = math.fsum(s.speed_sum for s in seconds) / vehicle_seconds
        speed = min(max(mean_ms * 3.6, 0.0), link.speed_limit)
        ghg_er = math.fsum(ghg_by_second) / vehicle_seconds

    density = (vehicle_seconds / INTERVAL_S) / (link.length / 1000.0 * link.lanes)
    flow = exits * (3600 / INTERVAL_S)

    if exits:
        actual = math.fsum(s.exit_tt_sum for s in seconds) / exits
    else:
        actual = travel_time_cost(link.length, speed)
    delay = max(0.0, actual - link.free_flow_time)

    return LinkIntervalRecord(
        link_id=link.id,
        interval=interval,
        speed_kmh=speed,
        density_lane=density,
        flow_vph=flow,
        delay_s=delay,
        ghg_by_second=ghg_by_second,
        nox_g=nox,
        vehicle_seconds=vehicle_seconds,
        ghg_er=ghg_er,
        flow_lane_vph=flow / link.lanes,
    )


def record_from_series(link_id: int, interval: int, ghg_by_second: Sequence[float], **fields) -> LinkIntervalRecord:
    """Record carrying only an emission series; everything else defaults to an idle link."""
    values = dict(
        speed_kmh=0.0, density_lane=0.0, flow_vph=0.0, delay_s=0.0, nox_g=0.0,
        vehicle_seconds=0, ghg_er=0.0, flow_lane_vph=0.0,
    )
    values.update(fields)
    return LinkIntervalRecord(link_id=link_id, interval=interval, ghg_by_second=tuple(ghg_by_second), **values)


def attach_inlink_speeds(records: Iterable[LinkIntervalRecord], network: Network) -> List[LinkIntervalRecord]:
    """
    Fill the in-links feature: mean space-mean speed of all links ending at each link's
    upstream node during the same interval. Links without feeders use their own speed.
    """
    records = list(records)
    by_key: Dict[Tuple[int, int], LinkIntervalRecord] = {(r.link_id, r.interval): r for r in records}
    out = []
    for rec in records:
        link = network.link(rec.link_id)
        speeds = [
            by_key[(up, rec.interval)].speed_kmh
            for up in network.in_links(link.from_node)
            if (up, rec.interval) in by_key
        ]
        inlink = sum(speeds) / len(speeds) if speeds else rec.speed_kmh
        out.append(replace(rec, inlink_speed_kmh=inlink))
    return out


def records_to_frame(records: Iterable[LinkIntervalRecord]) -> pd.DataFrame:
    return pd.DataFrame([r.as_row() for r in records], columns=LINK_RECORD_COLUMNS)


def write_link_records(records: Iterable[LinkIntervalRecord], path: PathLike) -> Path:
    return write_frame_csv(records_to_frame(records), path)


def read_link_records(paths: Union[PathLike, Sequence[PathLike]]) -> pd.DataFrame:
    """
    Load one or more link-interval CSVs into one frame. A `run_id` column tells runs
    apart so sequences never run across them; files that already carry one keep their
    runs, renumbered after those of earlier files.
    """
    if isinstance(paths, (str, Path)):
        paths = [paths]
    frames = []
    next_run = 0
    for path in paths:
        df = read_frame_csv(path, LINK_RECORD_COLUMNS)
        if "run_id" in df.columns:
            runs = {run: next_run + k for k, run in enumerate(sorted(df["run_id"].unique()))}
            df["run_id"] = df["run_id"].map(runs)
        else:
            runs = {0: next_run}
            df["run_id"] = next_run
        next_run += len(runs)
        frames.append(df)
    return pd.concat(frames, ignore_index=True)

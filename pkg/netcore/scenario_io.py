from pathlib import Path
from typing import Sequence, Tuple, Union

import pandas as pd

from netcore.network import (
    DemandTable,
    Link,
    Network,
    ScenarioParseError,
    Trip,
    validate_demand,
)
from utils.file_utils import read_frame_csv, write_frame_csv
from utils.logger import get_logger

logger = get_logger(__name__)

NETWORK_COLUMNS = ["link_id", "from_node", "to_node", "length_m", "lanes", "speed_limit_kmh"]
DEMAND_COLUMNS = ["vehicle_id", "origin", "destination", "departure_s"]

PathLike = Union[str, Path]


def _read(path: PathLike, columns: Sequence[str]) -> pd.DataFrame:
    try:
        return read_frame_csv(path, columns)
    except FileNotFoundError:
        raise
    except ValueError as e:
        raise ScenarioParseError(str(e)) from e


def _numeric(df: pd.DataFrame, column: str, integer: bool, source: str) -> list:
    try:
        values = pd.to_numeric(df[column], errors="raise")
    except (ValueError, TypeError) as e:
        raise ScenarioParseError(f"Failed to parse column '{column}' in {source}: {e}") from e
    if values.isna().any():
        row = int(values.isna().to_numpy().argmax())
        raise ScenarioParseError(f"Missing '{column}' value at row {row + 1} in {source}")
    if integer:
        if (values != values.round()).any():
            raise ScenarioParseError(f"Column '{column}' in {source} must hold integers")
        return [int(v) for v in values]
    return [float(v) for v in values]


def load_network(path: PathLike) -> Network:
    """Load and validate a network CSV (`link_id,from_node,to_node,length_m,lanes,speed_limit_kmh`)."""
    path = Path(path)
    df = _read(path, NETWORK_COLUMNS)
    ids = _numeric(df, "link_id", True, path.name)
    src = _numeric(df, "from_node", True, path.name)
    dst = _numeric(df, "to_node", True, path.name)
    lengths = _numeric(df, "length_m", False, path.name)
    lanes = _numeric(df, "lanes", True, path.name)
    limits = _numeric(df, "speed_limit_kmh", False, path.name)

    links = [Link(*row) for row in zip(ids, src, dst, lengths, lanes, limits)]
    network = Network.from_links(links)
    logger.info(f"Loaded network {path.name}: {len(network.nodes)} nodes, {len(network.links)} links")
    return network


def save_network(network: Network, path: PathLike) -> Path:
    df = pd.DataFrame(
        [
            (l.id, l.from_node, l.to_node, l.length, l.lanes, l.speed_limit)
            for l in sorted(network.links, key=lambda l: l.id)
        ],
        columns=NETWORK_COLUMNS,
    )
    return write_frame_csv(df, path)


def load_demand(path: PathLike) -> DemandTable:
    """Load a demand CSV (`vehicle_id,origin,destination,departure_s`)."""
    path = Path(path)
    df = _read(path, DEMAND_COLUMNS)
    ids = _numeric(df, "vehicle_id", True, path.name)
    origins = _numeric(df, "origin", True, path.name)
    destinations = _numeric(df, "destination", True, path.name)
    departures = _numeric(df, "departure_s", False, path.name)
    demand = DemandTable(trips=tuple(Trip(*row) for row in zip(ids, origins, destinations, departures)))
    logger.info(f"Loaded demand {path.name}: {len(demand)} trips")
    return demand


def save_demand(demand: DemandTable, path: PathLike) -> Path:
    df = pd.DataFrame(
        [(t.vehicle_id, t.origin, t.destination, t.departure_s) for t in demand.trips],
        columns=DEMAND_COLUMNS,
    )
    return write_frame_csv(df, path)


def load_scenario(network_path: PathLike, demand_path: PathLike) -> Tuple[Network, DemandTable]:
    network = load_network(network_path)
    demand = load_demand(demand_path)
    validate_demand(network, demand)
    return network, demand

from typing import List, Tuple

import networkx as nx
import numpy as np

from netcore.network import (
    DemandTable,
    LANE_COUNTS,
    Link,
    Network,
    SPEED_LIMITS_KMH,
    ScenarioValidationError,
    Trip,
)
from utils.logger import get_logger

logger = get_logger(__name__)

# --- Attribute marginals of the heterogeneous downtown network ---
SPEED_LIMIT_PROBS = (0.02, 0.01, 0.30, 0.59, 0.08)
LANE_PROBS = (0.07, 0.71, 0.15, 0.07)
LENGTH_RANGE_M = (100.0, 450.0)

DISTRIBUTIONS = ("exponential", "uniform", "normal")


def generate_grid_network(rows: int, cols: int, seed: int) -> Network:
    """
    Bidirectional rows × cols grid. Node id = r·cols + c; every grid edge yields two
    directed links whose speed limit, lane count and length are drawn independently.
    """
    if rows < 2 or cols < 2:
        raise ValueError(f"Grid needs rows >= 2 and cols >= 2, got {rows}x{cols}")

    rng = np.random.default_rng(seed)
    pairs: List[Tuple[int, int]] = []
    for r in range(rows):
        for c in range(cols):
            node = r * cols + c
            if c + 1 < cols:
                pairs += [(node, node + 1), (node + 1, node)]
            if r + 1 < rows:
                pairs += [(node, node + cols), (node + cols, node)]

    n = len(pairs)
    limits = rng.choice(SPEED_LIMITS_KMH, size=n, p=SPEED_LIMIT_PROBS)
    lanes = rng.choice(LANE_COUNTS, size=n, p=LANE_PROBS)
    lengths = np.round(rng.uniform(*LENGTH_RANGE_M, size=n), 1)

    links = [
        Link(
            id=i,
            from_node=a,
            to_node=b,
            length=float(lengths[i]),
            lanes=int(lanes[i]),
            speed_limit=float(limits[i]),
        )
        for i, (a, b) in enumerate(pairs)
    ]
    network = Network(nodes=tuple(range(rows * cols)), links=tuple(links))
    logger.info(f"Generated {rows}x{cols} grid: {len(network.nodes)} nodes, {len(links)} links (seed={seed})")
    return network


def _truncated_draws(rng: np.random.Generator, distribution: str, n: int, horizon: float) -> np.ndarray:
    """Draw n departures from the named distribution, resampling anything outside [0, horizon]."""
    def draw(size: int) -> np.ndarray:
        if distribution == "uniform":
            return rng.uniform(0.0, horizon, size=size)
        if distribution == "exponential":
            return rng.exponential(horizon / 3.0, size=size)
        return rng.normal(horizon / 2.0, horizon / 6.0, size=size)

    out = np.empty(0)
    while out.size < n:
        batch = draw(n - out.size)
        out = np.concatenate([out, batch[(batch >= 0.0) & (batch <= horizon)]])
    return out[:n]


def generate_demand(
    network: Network,
    n_vehicles: int,
    distribution: str,
    horizon: float,
    seed: int,
) -> DemandTable:
    """
    n_vehicles trips with OD pairs uniform over reachable ordered node pairs and departures
    from the named distribution truncated to [0, horizon]. Vehicle ids follow departure order.
    """
    if n_vehicles < 1:
        raise ValueError(f"n_vehicles must be >= 1, got {n_vehicles}")
    if not horizon > 0:
        raise ValueError(f"horizon must be > 0, got {horizon}")
    if distribution not in DISTRIBUTIONS:
        raise ValueError(f"Unknown departure distribution '{distribution}', expected one of {DISTRIBUTIONS}")
    if len(network.nodes) < 2:
        raise ValueError("Demand generation needs at least 2 nodes")

    graph = network.to_digraph()
    od_pairs = [
        (o, d)
        for o in network.nodes
        for d in sorted(nx.descendants(graph, o))
        if d != o
    ]
    if not od_pairs:
        raise ScenarioValidationError("No reachable OD pair in network")

    rng = np.random.default_rng(seed)
    picks = rng.integers(0, len(od_pairs), size=n_vehicles)
    departures = _truncated_draws(rng, distribution, n_vehicles, float(horizon))

    order = np.argsort(departures, kind="stable")
    trips = tuple(
        Trip(
            vehicle_id=vid,
            origin=od_pairs[picks[idx]][0],
            destination=od_pairs[picks[idx]][1],
            departure_s=float(departures[idx]),
        )
        for vid, idx in enumerate(order)
    )
    logger.info(f"Generated demand: {n_vehicles} trips, {distribution} departures over {horizon:g} s (seed={seed})")
    return DemandTable(trips=trips)


def generate_scenario(
    rows: int,
    cols: int,
    n_vehicles: int,
    distribution: str = "uniform",
    horizon: float = 900.0,
    seed: int = 0,
) -> Tuple[Network, DemandTable]:
    network = generate_grid_network(rows, cols, seed)
    demand = generate_demand(network, n_vehicles, distribution, horizon, seed + 1)
    return network, demand

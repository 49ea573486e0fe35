from dataclasses import dataclass, field
from typing import Dict, Iterable, Mapping, Tuple

import networkx as nx

SPEED_LIMITS_KMH = (10, 30, 40, 60, 80)
LANE_COUNTS = (1, 2, 3, 4)


class ScenarioParseError(ValueError):
    """A scenario file has a malformed header, row or field."""


class ScenarioValidationError(ValueError):
    """A scenario breaks a network or demand invariant."""


@dataclass(frozen=True)
class Link:
    id: int
    from_node: int
    to_node: int
    length: float          # meters
    lanes: int
    speed_limit: float     # km/h

    def __post_init__(self):
        if not self.length > 0:
            raise ScenarioValidationError(f"Link {self.id}: length must be > 0, got {self.length}")
        if self.lanes not in LANE_COUNTS:
            raise ScenarioValidationError(f"Link {self.id}: lanes must be one of {LANE_COUNTS}, got {self.lanes}")
        if self.speed_limit not in SPEED_LIMITS_KMH:
            raise ScenarioValidationError(
                f"Link {self.id}: speed limit must be one of {SPEED_LIMITS_KMH} km/h, got {self.speed_limit}"
            )
        if self.from_node == self.to_node:
            raise ScenarioValidationError(f"Link {self.id}: from_node equals to_node ({self.from_node})")

    @property
    def speed_limit_ms(self) -> float:
        return self.speed_limit / 3.6

    @property
    def free_flow_time(self) -> float:
        """Seconds to traverse the link at the speed limit."""
        return self.length / self.speed_limit_ms


@dataclass(frozen=True)
class Network:
    """Directed road graph. Nodes are intersections, links carry the road attributes."""

    nodes: Tuple[int, ...]
    links: Tuple[Link, ...]
    _by_id: Dict[int, Link] = field(init=False, repr=False, compare=False)
    _in: Dict[int, Tuple[int, ...]] = field(init=False, repr=False, compare=False)
    _out: Dict[int, Tuple[int, ...]] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        by_id: Dict[int, Link] = {}
        for link in self.links:
            if link.id in by_id:
                raise ScenarioValidationError(f"Duplicate link id {link.id}")
            by_id[link.id] = link

        node_set = set(self.nodes)
        if len(node_set) != len(self.nodes):
            raise ScenarioValidationError("Duplicate node ids")

        in_links: Dict[int, list] = {n: [] for n in self.nodes}
        out_links: Dict[int, list] = {n: [] for n in self.nodes}
        for link in self.links:
            if link.from_node not in node_set or link.to_node not in node_set:
                raise ScenarioValidationError(f"Link {link.id} references an unknown node")
            out_links[link.from_node].append(link.id)
            in_links[link.to_node].append(link.id)

        object.__setattr__(self, "_by_id", by_id)
        object.__setattr__(self, "_in", {n: tuple(sorted(ids)) for n, ids in in_links.items()})
        object.__setattr__(self, "_out", {n: tuple(sorted(ids)) for n, ids in out_links.items()})

    @classmethod
    def from_links(cls, links: Iterable[Link]) -> "Network":
        """Build a network whose node set is the set of link endpoints."""
        links = tuple(sorted(links, key=lambda l: l.id))
        nodes = sorted({l.from_node for l in links} | {l.to_node for l in links})
        return cls(nodes=tuple(nodes), links=links)

    def link(self, link_id: int) -> Link:
        try:
            return self._by_id[link_id]
        except KeyError:
            raise KeyError(f"Unknown link id {link_id}") from None

    def in_links(self, node: int) -> Tuple[int, ...]:
        return self._in[node]

    def out_links(self, node: int) -> Tuple[int, ...]:
        return self._out[node]

    @property
    def link_ids(self) -> Tuple[int, ...]:
        return tuple(l.id for l in self.links)

    def free_flow_time(self, link_id: int) -> float:
        return self.link(link_id).free_flow_time

    def to_digraph(self, weight: Mapping[int, float] = None) -> nx.DiGraph:
        """
        networkx view of the network. Edge attribute `link` holds the link id and `weight`
        the given per-link weight (free-flow time by default). Parallel links keep the cheapest.
        """
        graph = nx.DiGraph()
        graph.add_nodes_from(self.nodes)
        for link in self.links:
            w = weight[link.id] if weight is not None else link.free_flow_time
            current = graph.get_edge_data(link.from_node, link.to_node)
            if current is None or w < current["weight"]:
                graph.add_edge(link.from_node, link.to_node, link=link.id, weight=w)
        return graph


@dataclass(frozen=True)
class Trip:
    vehicle_id: int
    origin: int
    destination: int
    departure_s: float


@dataclass(frozen=True)
class DemandTable:
    trips: Tuple[Trip, ...]

    def __post_init__(self):
        seen = set()
        for trip in self.trips:
            if trip.vehicle_id in seen:
                raise ScenarioValidationError(f"Duplicate vehicle id {trip.vehicle_id}")
            seen.add(trip.vehicle_id)
            if not (trip.departure_s >= 0 and trip.departure_s != float("inf")):
                raise ScenarioValidationError(
                    f"Vehicle {trip.vehicle_id}: departure must be finite and non-negative, got {trip.departure_s}"
                )
            if trip.origin == trip.destination:
                raise ScenarioValidationError(f"Vehicle {trip.vehicle_id}: origin equals destination")

    def __len__(self) -> int:
        return len(self.trips)


def validate_demand(network: Network, demand: DemandTable) -> None:
    """Every trip must start and end on network nodes, with the destination reachable."""
    graph = network.to_digraph()
    reach_cache: Dict[int, set] = {}
    for trip in demand.trips:
        for node in (trip.origin, trip.destination):
            if node not in graph:
                raise ScenarioValidationError(f"Vehicle {trip.vehicle_id}: node {node} not in network")
        if trip.origin not in reach_cache:
            reach_cache[trip.origin] = nx.descendants(graph, trip.origin)
        if trip.destination not in reach_cache[trip.origin]:
            raise ScenarioValidationError(
                f"Vehicle {trip.vehicle_id}: destination {trip.destination} unreachable from {trip.origin}"
            )

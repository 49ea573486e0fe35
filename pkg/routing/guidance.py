import heapq
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, FrozenSet, Iterable, List, Mapping, Optional, Tuple, Union

from netcore.network import Network
from utils.logger import get_logger

logger = get_logger(__name__)


class Hop(Enum):
    ARRIVED = "arrived"   # vehicle is at its destination node
    HOLD = "hold"         # no guidance for this destination; wait and retry


@dataclass(frozen=True)
class GuidanceTable:
    """Next-hop link per (intersection, destination), valid for one routing epoch."""

    epoch: int
    next_hop: Mapping[int, Mapping[int, int]]
    unreachable: FrozenSet[Tuple[int, int]] = field(default_factory=frozenset)

    def lookup(self, node: int, destination: int) -> Optional[int]:
        return self.next_hop.get(node, {}).get(destination)

    def rows(self, node: int) -> Mapping[int, int]:
        return self.next_hop.get(node, {})


EMPTY_GUIDANCE = GuidanceTable(epoch=-1, next_hop={})


def next_link(node: int, destination: int, table: GuidanceTable) -> Union[int, Hop]:
    if node == destination:
        return Hop.ARRIVED
    link_id = table.lookup(node, destination)
    return Hop.HOLD if link_id is None else link_id


def shortest_path_tree(
    network: Network,
    weights: Mapping[int, float],
    destination: int,
) -> Tuple[Dict[int, int], Dict[int, float]]:
    """
    Single-source search from the destination over reversed links. Keys are (cost, hops);
    equal keys go to the smaller link id. A node is only ever pointed at a node settled
    before it, so the next-hop graph is a tree.

    Returns (next hop link per node, cost to destination per node).
    """
    best: Dict[int, Tuple[float, int]] = {destination: (0.0, 0)}
    hop: Dict[int, int] = {}
    settled = set()
    heap: List[Tuple[float, int, int]] = [(0.0, 0, destination)]

    while heap:
        cost, hops, u = heapq.heappop(heap)
        if u in settled or (cost, hops) != best[u]:
            continue
        settled.add(u)
        for link_id in network.in_links(u):
            link = network.link(link_id)
            x = link.from_node
            if x in settled:
                continue
            cand = (cost + weights[link_id], hops + 1)
            current = best.get(x)
            if current is None or cand < current or (cand == current and link_id < hop[x]):
                best[x] = cand
                hop[x] = link_id
                heapq.heappush(heap, (cand[0], cand[1], x))

    return hop, {n: c for n, (c, _) in best.items()}


def check_weights(network: Network, weights: Mapping[int, float]) -> None:
    for link_id in network.link_ids:
        if link_id not in weights:
            raise ValueError(f"No weight for link {link_id}")
        w = weights[link_id]
        if not (math.isfinite(w) and w >= 0):
            raise ValueError(f"Link {link_id}: weight must be finite and >= 0, got {w}")


def rebuild_guidance(
    network: Network,
    weights: Mapping[int, float],
    epoch: int,
    previous: Optional[GuidanceTable] = None,
) -> GuidanceTable:
    """
    All-destinations next-hop tables, one reversed search per destination. A pair that is
    unreachable this epoch keeps its row from previous, when given.
    """
    check_weights(network, weights)
    next_hop: Dict[int, Dict[int, int]] = {n: {} for n in network.nodes}
    unreachable = set()
    for dest in network.nodes:
        hop, _ = shortest_path_tree(network, weights, dest)
        for node in network.nodes:
            if node == dest:
                continue
            if node in hop:
                next_hop[node][dest] = hop[node]
                continue
            unreachable.add((node, dest))
            stale = previous.lookup(node, dest) if previous is not None else None
            if stale is not None:
                next_hop[node][dest] = stale
    if unreachable:
        logger.warning(f"Epoch {epoch}: {len(unreachable)} (node, destination) pairs unreachable")
    logger.debug(f"Guidance rebuilt for epoch {epoch}")
    return GuidanceTable(epoch=epoch, next_hop=next_hop, unreachable=frozenset(unreachable))


def follow(network: Network, table: GuidanceTable, origin: int, destination: int) -> List[int]:
    """Links visited when following next hops from origin; raises on a loop or a dead end."""
    path, node, seen = [], origin, {origin}
    while node != destination:
        link_id = table.lookup(node, destination)
        if link_id is None:
            raise LookupError(f"No guidance from node {node} to {destination}")
        path.append(link_id)
        node = network.link(link_id).to_node
        if node in seen:
            raise RuntimeError(f"Routing loop towards {destination} at node {node} (epoch {table.epoch})")
        seen.add(node)
    return path


def assert_loop_free(network: Network, table: GuidanceTable) -> None:
    for node, rows in table.next_hop.items():
        for dest in rows:
            follow(network, table, node, dest)


def guidance_flips(previous: GuidanceTable, current: GuidanceTable) -> int:
    """Number of (node, destination) entries whose next hop changed."""
    flips = 0
    for node, rows in current.next_hop.items():
        old = previous.next_hop.get(node, {})
        flips += sum(1 for dest, link_id in rows.items() if dest in old and old[dest] != link_id)
    return flips


def guidance_rows(table: GuidanceTable) -> Iterable[Tuple[int, int, int, int]]:
    """(epoch, node, destination, next_link) rows for the debug dump."""
    for node in sorted(table.next_hop):
        for dest in sorted(table.next_hop[node]):
            yield table.epoch, node, dest, table.next_hop[node][dest]

from typing import Dict, Mapping, Optional

from netcore.network import Network
from routing.guidance import GuidanceTable, check_weights, shortest_path_tree
from utils.logger import get_logger

logger = get_logger(__name__)


class IntersectionAgent:
    """
    An intelligent intersection. It keeps the link weights of the current epoch, owns the
    next-hop rows vehicles at its node read, and computes the route tree towards itself
    that it shares with the other agents.
    """

    def __init__(self, node: int, network: Network):
        self.node = node
        self.network = network
        self.epoch = -1
        self.rows: Dict[int, int] = {}
        self._view: Mapping[int, float] = {}

    def receive(self, weights: Mapping[int, float], epoch: int) -> None:
        self._view = weights
        self.epoch = epoch

    def route_tree(self) -> Dict[int, int]:
        """Next-hop link of every node that can reach this intersection."""
        hop, _ = shortest_path_tree(self.network, self._view, self.node)
        return hop

    def install(self, destination: int, link_id: int) -> None:
        self.rows[destination] = link_id

    def next_hop(self, destination: int) -> Optional[int]:
        return self.rows.get(destination)


class I2INetwork:
    """All intersection agents and the broadcast that keeps their view of the network coherent."""

    def __init__(self, network: Network):
        self.network = network
        self.agents: Dict[int, IntersectionAgent] = {n: IntersectionAgent(n, network) for n in network.nodes}

    def broadcast(self, weights: Mapping[int, float], epoch: int) -> GuidanceTable:
        """
        Share the epoch's link weights with every agent, let each destination agent push
        its route tree to the others, and collect the rows into one table. A pair left
        unreachable keeps the row it had.
        """
        check_weights(self.network, weights)
        view = dict(weights)
        for agent in self.agents.values():
            agent.receive(view, epoch)

        unreachable = set()
        for dest, dest_agent in self.agents.items():
            tree = dest_agent.route_tree()
            for node, agent in self.agents.items():
                if node == dest:
                    continue
                if node in tree:
                    agent.install(dest, tree[node])
                else:
                    unreachable.add((node, dest))

        if unreachable:
            logger.warning(f"Epoch {epoch}: {len(unreachable)} (node, destination) pairs unreachable")
        return GuidanceTable(
            epoch=epoch,
            next_hop={node: dict(agent.rows) for node, agent in self.agents.items()},
            unreachable=frozenset(unreachable),
        )

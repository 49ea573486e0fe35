from collections import deque
from typing import Callable, Deque, Dict, List, Mapping, Optional, Sequence

from emissions.opmode import OpModeTable
from forecast.predictors import predict_links
from linkstate.records import LinkIntervalRecord
from netcore.network import Network
from routing.guidance import EMPTY_GUIDANCE, GuidanceTable, assert_loop_free, guidance_flips
from routing.intersections import I2INetwork
from routing.objectives import (
    LinkEstimate,
    ObjectiveConfig,
    free_flow_estimates,
    link_weights,
    objective_references,
)
from utils.logger import get_logger

logger = get_logger(__name__)


class RoutingController:
    """
    Turns closed link-interval records into the next epoch's guidance. Myopic strategies
    price the interval just closed; anticipatory ones price the predicted next interval.
    """

    def __init__(self, network: Network, cfg: ObjectiveConfig, table: OpModeTable, check_loops: bool = False):
        self.network = network
        self.cfg = cfg
        self.check_loops = check_loops
        self.i2i = I2INetwork(network)
        self.refs = objective_references(network, table)
        self._free_flow = free_flow_estimates(network, table)
        depth = max([m.n_steps for m in cfg.models.values()] + [1])
        self._history: Dict[int, Deque[LinkIntervalRecord]] = {
            link.id: deque(maxlen=depth) for link in network.links
        }
        self.guidance: GuidanceTable = EMPTY_GUIDANCE
        self.flips: List[int] = []

    @property
    def needs_lookahead(self) -> bool:
        return any(m.kind == "oracle" for m in self.cfg.models.values())

    def initial_guidance(self) -> GuidanceTable:
        """Epoch 0 guidance from free-flow link states."""
        return self._install(self._free_flow)

    def refresh(
        self,
        records: Sequence[LinkIntervalRecord],
        lookahead: Optional[Sequence[LinkIntervalRecord]] = None,
    ) -> GuidanceTable:
        for rec in records:
            self._history[rec.link_id].append(rec)
        if self.cfg.strategy.anticipatory:
            estimates = self._predicted(lookahead)
        else:
            estimates = {
                link_id: LinkEstimate(history[-1].speed_kmh, history[-1].ghg_er, history[-1])
                for link_id, history in self._history.items()
            }
        return self._install(estimates)

    def _predicted(self, lookahead: Optional[Sequence[LinkIntervalRecord]]) -> Dict[int, LinkEstimate]:
        ahead = {r.link_id: r for r in lookahead} if lookahead is not None else None
        links = {link.id: link for link in self.network.links}
        models = self.cfg.models
        speeds = predict_links(models["speed"], self._history, links, ahead)
        if "ghg_er" in models:
            rates = predict_links(models["ghg_er"], self._history, links, ahead)
        else:
            rates = {link_id: history[-1].ghg_er for link_id, history in self._history.items()}
        return {link_id: LinkEstimate(speeds[link_id], rates[link_id]) for link_id in self._history}

    def _install(self, estimates: Mapping[int, LinkEstimate]) -> GuidanceTable:
        epoch = self.guidance.epoch + 1
        weights = link_weights(self.network, estimates, self.cfg, self.refs)
        table = self.i2i.broadcast(weights, epoch)
        if self.check_loops:
            assert_loop_free(self.network, table)
        if self.guidance is not EMPTY_GUIDANCE:
            flips = guidance_flips(self.guidance, table)
            self.flips.append(flips)
            logger.debug(f"{self.cfg.label} epoch {epoch}: {flips} next-hop changes")
        self.guidance = table
        return table


IntervalHook = Callable[[Sequence[LinkIntervalRecord], GuidanceTable], None]


def routing_loop(world, controller: RoutingController, on_step=None, on_interval: Optional[IntervalHook] = None) -> None:
    """
    Run world to completion under controller's guidance: the table is rebuilt at every
    interval boundary and stays read-only in between. on_step receives each step result,
    on_interval each closed interval with the guidance that was in force.
    """
    guidance = controller.initial_guidance()
    while not world.done:
        result = world.step(guidance)
        if on_step is not None:
            on_step(result)
        if not (result.interval_closed or world.done):
            continue
        records = world.close_interval()
        if on_interval is not None:
            on_interval(records, guidance)
        if world.done:
            break
        lookahead = world.shadow_interval(guidance) if controller.needs_lookahead else None
        guidance = controller.refresh(records, lookahead)

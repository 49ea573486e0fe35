"""
Link weights for the six routing strategies.

    TT       travel time of the link at the estimated speed
    GHG      grams one vehicle emits crossing the link (rate × travel time), or one of
             the aggregate costing approaches for myopic routing, floored at the
             grams of one free-flow crossing
    TT&GHG   w_t·T/T_ref + w_e·E/E_ref, both terms divided by network free-flow references
"""
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Mapping, Optional

from emissions.opmode import OpModeTable, cruise_rates
from forecast.predictors import PredictorModel
from linkstate.costing import CostingApproach, ghg_cost, ghg_cost_marginal, travel_time_cost
from linkstate.records import LinkIntervalRecord
from netcore.network import Link, Network

DEFAULT_WEIGHT = 0.5
DEFAULT_TT_CAP_MULTIPLE = 50.0


class ObjectiveConfigError(ValueError):
    """Invalid strategy, weights or predictor bindings."""


class Objective(str, Enum):
    TT = "TT"
    GHG = "GHG"
    TT_GHG = "TT&GHG"


class Strategy(str, Enum):
    TT_M = "TT_m"
    GHG_M = "GHG_m"
    TT_GHG_M = "TT&GHG_m"
    TT_A = "TT_a"
    GHG_A = "GHG_a"
    TT_GHG_A = "TT&GHG_a"

    @classmethod
    def parse(cls, value: str) -> "Strategy":
        try:
            return cls(str(value).strip())
        except ValueError:
            names = ", ".join(s.value for s in cls)
            raise ObjectiveConfigError(f"Unknown strategy '{value}', expected one of: {names}") from None

    @property
    def anticipatory(self) -> bool:
        return self.value.endswith("_a")

    @property
    def objective(self) -> Objective:
        return Objective(self.value.rsplit("_", 1)[0])

    @property
    def uses_emissions(self) -> bool:
        return self.objective is not Objective.TT

    @property
    def myopic_counterpart(self) -> "Strategy":
        return Strategy(f"{self.objective.value}_m")


@dataclass(frozen=True)
class LinkEstimate:
    """Link state a weight is computed from: observed (myopic) or predicted (anticipatory)."""

    speed_kmh: float
    ghg_er: float
    record: Optional[LinkIntervalRecord] = None


@dataclass(frozen=True)
class References:
    """
    Network-wide free-flow scales that make travel time and grams comparable, plus the
    grams of one free-flow crossing of each link.
    """

    tt_s: float
    ghg_g: float
    crossing_g: Mapping[int, float] = field(default_factory=dict)


@dataclass(frozen=True)
class ObjectiveConfig:
    strategy: Strategy
    w_t: float = DEFAULT_WEIGHT
    w_e: float = DEFAULT_WEIGHT
    costing: CostingApproach = CostingApproach.MARGINAL
    speed_model: Optional[PredictorModel] = None
    ghg_model: Optional[PredictorModel] = None
    tt_cap_multiple: float = DEFAULT_TT_CAP_MULTIPLE

    def __post_init__(self):
        for name in ("w_t", "w_e"):
            w = getattr(self, name)
            if not (math.isfinite(w) and w >= 0):
                raise ObjectiveConfigError(f"{name} must be finite and >= 0, got {w}")
        if not self.w_t + self.w_e > 0:
            raise ObjectiveConfigError("w_t + w_e must be > 0")
        if not self.tt_cap_multiple > 0:
            raise ObjectiveConfigError(f"tt_cap_multiple must be > 0, got {self.tt_cap_multiple}")
        if self.costing is not CostingApproach.MARGINAL and (self.strategy.anticipatory or not self.strategy.uses_emissions):
            raise ObjectiveConfigError(
                f"Costing approach '{self.costing.value}' applies to myopic emission strategies only, not {self.strategy.value}"
            )
        if self.strategy.anticipatory:
            self._check_model(self.speed_model, "speed")
            if self.strategy.uses_emissions:
                self._check_model(self.ghg_model, "ghg_er")

    def _check_model(self, model: Optional[PredictorModel], target: str) -> None:
        if model is None:
            raise ObjectiveConfigError(f"{self.strategy.value} needs a bound {target} predictor")
        if model.target != target:
            raise ObjectiveConfigError(f"{self.strategy.value}: {target} slot holds a {model.target} model")

    @property
    def label(self) -> str:
        if self.costing is CostingApproach.MARGINAL:
            return self.strategy.value
        return f"{self.strategy.value}-{self.costing.value}"

    @property
    def models(self) -> Dict[str, PredictorModel]:
        """Predictors the strategy consults, by target."""
        if not self.strategy.anticipatory:
            return {}
        models = {"speed": self.speed_model}
        if self.strategy.uses_emissions:
            models["ghg_er"] = self.ghg_model
        return models


def free_flow_estimates(network: Network, table: OpModeTable) -> Dict[int, LinkEstimate]:
    return {
        link.id: LinkEstimate(speed_kmh=link.speed_limit, ghg_er=cruise_rates(link.speed_limit_ms, table)[0])
        for link in network.links
    }


def objective_references(network: Network, table: OpModeTable) -> References:
    """Mean free-flow link travel time and mean free-flow grams per link crossing."""
    estimates = free_flow_estimates(network, table)
    tts = [link.free_flow_time for link in network.links]
    grams = [estimates[link.id].ghg_er * link.free_flow_time for link in network.links]
    tt_ref = math.fsum(tts) / len(tts)
    ghg_ref = math.fsum(grams) / len(grams)
    crossing = {link.id: g for link, g in zip(network.links, grams)}
    return References(tt_s=tt_ref, ghg_g=ghg_ref if ghg_ref > 0 else 1.0, crossing_g=crossing)


def link_weight(link: Link, estimate: LinkEstimate, cfg: ObjectiveConfig, refs: References) -> float:
    tt = travel_time_cost(link.length, estimate.speed_kmh, cap_s=cfg.tt_cap_multiple * link.free_flow_time)
    objective = cfg.strategy.objective
    if objective is Objective.TT:
        return tt

    if cfg.costing is CostingApproach.MARGINAL:
        grams = ghg_cost_marginal(max(estimate.ghg_er, 0.0), tt)
    else:
        # aggregate costs never drop below one free-flow crossing, the price of an empty link
        floor = refs.crossing_g.get(link.id, 0.0)
        if estimate.record is None:
            grams = floor
        else:
            grams = max(ghg_cost(estimate.record, link.lanes, cfg.costing, tt), floor)
    if objective is Objective.GHG:
        return grams
    return cfg.w_t * tt / refs.tt_s + cfg.w_e * grams / refs.ghg_g


def link_weights(
    network: Network,
    estimates: Mapping[int, LinkEstimate],
    cfg: ObjectiveConfig,
    refs: References,
) -> Dict[int, float]:
    return {link.id: link_weight(link, estimates[link.id], cfg, refs) for link in network.links}

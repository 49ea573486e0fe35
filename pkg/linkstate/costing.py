"""
Link cost functions for one 60-second interval.

GHG costs work on the per-second link totals g_k (sum over the vehicles on the link at
second k, k = 1..60). Travel time comes from the interval's space-mean speed.
"""
import math
from enum import Enum
from typing import Optional

SPEED_EPSILON_KMH = 0.1


class CostingApproach(str, Enum):
    SUM = "sum"
    SUM_PER_LANE = "sum_per_lane"
    WEIGHTED = "weighted"
    WEIGHTED_PER_LANE = "weighted_per_lane"
    MARGINAL = "marginal"

    @classmethod
    def parse(cls, value: str) -> "CostingApproach":
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            names = ", ".join(c.value for c in cls)
            raise ValueError(f"Unknown costing approach '{value}', expected one of: {names}") from None


def ghg_cost_sum(rec) -> float:
    """Total grams emitted on the link during the interval."""
    return math.fsum(rec.ghg_by_second)


def ghg_cost_sum_per_lane(rec, lanes: int) -> float:
    if lanes < 1:
        raise ValueError(f"lanes must be >= 1, got {lanes}")
    return ghg_cost_sum(rec) / lanes


def ghg_cost_weighted(rec) -> float:
    """Average of g_k with weight k, so the latest seconds dominate."""
    g = rec.ghg_by_second
    weights = range(1, len(g) + 1)
    return math.fsum(k * gk for k, gk in zip(weights, g)) / sum(weights)


def ghg_cost_weighted_per_lane(rec, lanes: int) -> float:
    if lanes < 1:
        raise ValueError(f"lanes must be >= 1, got {lanes}")
    return ghg_cost_weighted(rec) / lanes


def ghg_cost_marginal(er: float, tt: float) -> float:
    """Grams one vehicle emits crossing the link: rate (g/s) × travel time (s)."""
    if er < 0 or tt < 0:
        raise ValueError(f"Marginal cost needs er >= 0 and tt >= 0, got er={er}, tt={tt}")
    return er * tt


def travel_time_cost(length_m: float, speed_kmh: float, cap_s: Optional[float] = None) -> float:
    """
    Seconds to cross a link of length_m at speed_kmh. Speeds at or below 0.1 km/h are
    priced at 0.1 km/h; cap_s bounds the result when given.
    """
    if not length_m > 0:
        raise ValueError(f"Link length must be > 0, got {length_m}")
    speed = max(speed_kmh, SPEED_EPSILON_KMH)
    tt = (length_m / 1000.0) / speed * 3600.0
    if cap_s is not None:
        tt = min(tt, cap_s)
    return tt


def ghg_cost(rec, lanes: int, approach: CostingApproach, tt_s: float) -> float:
    """Dispatch to the costing approach; tt_s feeds the marginal cost only."""
    if approach is CostingApproach.SUM:
        return ghg_cost_sum(rec)
    if approach is CostingApproach.SUM_PER_LANE:
        return ghg_cost_sum_per_lane(rec, lanes)
    if approach is CostingApproach.WEIGHTED:
        return ghg_cost_weighted(rec)
    if approach is CostingApproach.WEIGHTED_PER_LANE:
        return ghg_cost_weighted_per_lane(rec, lanes)
    return ghg_cost_marginal(rec.ghg_er, tt_s)

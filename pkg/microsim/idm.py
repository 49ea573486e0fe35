import math
from dataclasses import dataclass, replace
from typing import Optional

VEHICLE_LENGTH_M = 5.0


@dataclass(frozen=True)
class IdmParams:
    """Intelligent Driver Model parameters. v0 is set per link from its speed limit."""

    v0: float = 40 / 3.6      # desired speed, m/s
    a_max: float = 1.5        # m/s²
    b: float = 2.0            # comfortable deceleration, m/s²
    s0: float = 2.0           # minimum gap, m
    T: float = 1.2            # desired headway, s
    delta: float = 4.0

    def __post_init__(self):
        for name in ("v0", "a_max", "b", "s0", "T", "delta"):
            if not getattr(self, name) > 0:
                raise ValueError(f"IDM parameter {name} must be > 0, got {getattr(self, name)}")
        if self.delta < 1:
            raise ValueError(f"IDM exponent delta must be >= 1, got {self.delta}")

    def with_desired_speed(self, v0: float) -> "IdmParams":
        return replace(self, v0=v0)


def idm_acceleration(
    v: float,
    v_lead: Optional[float],
    gap: Optional[float],
    p: IdmParams,
) -> float:
    """
    a = a_max·[1 − (v/v0)^δ − (s*/gap)²] with s* = s0 + max(0, v·T + v·(v − v_lead)/(2√(a_max·b))).
    Without a leader the interaction term is dropped.
    """
    free = 1.0 - (v / p.v0) ** p.delta
    if v_lead is None or gap is None:
        return p.a_max * free
    s_star = p.s0 + max(0.0, v * p.T + v * (v - v_lead) / (2.0 * math.sqrt(p.a_max * p.b)))
    return p.a_max * (free - (s_star / gap) ** 2)


def ballistic_update(v: float, a: float, v_max: float, dt: float = 1.0):
    """
    Advance one step with constant acceleration. Speed is clamped to [0, v_max]; a vehicle
    that would reverse stops where its speed reaches zero.

    Returns (new speed, displacement).
    """
    v_new = v + a * dt
    if v_new < 0.0:
        return 0.0, (-v * v / (2.0 * a) if a < 0 else 0.0)
    v_new = min(v_new, v_max)
    return v_new, (v + v_new) / 2.0 * dt

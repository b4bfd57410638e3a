"""Intelligent Driver Model acceleration for human-driven vehicles.

Red lights are handled by the simulator as a virtual standing leader just
short of the stop line, so the IDM itself only ever sees a leader gap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

MIN_GAP = 0.1  # m, guard against the quadratic gap term blowing up


@dataclass(frozen=True)
class IdmParams:
    """IDM parameter set.  The jam distance is the same standstill gap gamma
    used by the rear-end barrier, so queues of mixed vehicle kinds share one
    spacing convention."""

    v_des: float = 12.0       # m/s
    xi: float = 4.0           # accel exponent
    T_headway: float = 1.5    # s
    beta: float = 2.0         # m/s^2, comfortable deceleration
    gamma: float = 4.0        # m, jam distance

    def __post_init__(self):
        for name in ("v_des", "xi", "T_headway", "beta", "gamma"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


def desired_gap(v: float, delta_v: float, params: IdmParams, u_max: float) -> float:
    """Dynamic desired gap s*(v, delta_v), floored at 0 so a fast-escaping
    leader cannot square back into a braking term."""
    s_star = (params.gamma + v * params.T_headway
              + v * delta_v / (2.0 * math.sqrt(u_max * params.beta)))
    return s_star if s_star > 0.0 else 0.0


def idm_accel(v: float, delta_v: float, gap: float, params: IdmParams,
              u_max: float) -> float:
    """IDM acceleration, clamped to the physical limits [-u_max, u_max].

    delta_v is own speed minus leader speed (positive while closing); gap is
    the bumper distance to the leader.  A free road is gap = +inf.
    A nonpositive gap is an emergency: maximum braking.
    """
    if gap <= 0.0:
        return -u_max
    gap = max(gap, MIN_GAP)
    s_star = desired_gap(v, delta_v, params, u_max)
    u = u_max * (1.0 - (v / params.v_des) ** params.xi - (s_star / gap) ** 2)
    if u > u_max:
        return u_max
    if u < -u_max:
        return -u_max
    return u

"""Right-turn gap acceptance: time headways to the conflict point.

A turning vehicle waits at rest at its stop line, estimates how long it
needs to reach the conflict point under the speed-tracking reference law
(``solve_tau_j``), bounds the fastest possible arrival of the nearest
oncoming vehicle (``tau_i_headway``), and merges only when it wins that
race by the configured safety margin (``can_merge``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

NEWTON_MAX_ITER = 100
NEWTON_TOL = 1e-9  # m, residual on the position equation


@dataclass(frozen=True)
class ConflictPoint:
    """Geometry of one turning movement at decision time.

    d_j: distance from the turning vehicle's stop line to the conflict point.
    d_i: distance from the observed oncoming vehicle to the conflict point,
         with its speed at decision time; both None when no oncoming vehicle
         is in sensing range.
    """

    d_j: float
    d_i: Optional[float] = None
    oncoming_speed: Optional[float] = None

    def __post_init__(self):
        if self.d_j <= 0:
            raise ValueError("d_j must be positive")
        if self.d_i is not None and self.d_i < 0:
            raise ValueError("d_i must be nonnegative")


def position_profile(t: float, v_des: float, phi: float) -> float:
    """Distance covered from rest in time t under the reference law.

    The speed relaxes as v(t) = v_des*(1 - exp(-phi*t)); integrating gives
    the closed form below.  Strictly increasing for t > 0.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    return v_des * (t + (math.exp(-phi * t) - 1.0) / phi)


def solve_tau_j(d_j: float, v_des: float, phi: float) -> float:
    """Time for the stopped turner to cover d_j under the reference law.

    Solves position_profile(tau) = d_j by safeguarded Newton-Raphson (the
    derivative is the speed profile, positive for tau > 0) with a bisection
    fallback.  The asymptote d_j/v_des + 1/phi over-estimates the root, so
    starting there gives monotone convergence.
    """
    if d_j <= 0:
        raise ValueError("d_j must be positive")
    lo, hi = 0.0, d_j / v_des + 1.0 / phi
    tau = hi
    for _ in range(NEWTON_MAX_ITER):
        resid = position_profile(tau, v_des, phi) - d_j
        if abs(resid) < NEWTON_TOL:
            return tau
        if resid > 0:
            hi = tau
        else:
            lo = tau
        speed = v_des * (1.0 - math.exp(-phi * tau))
        if speed > 0.0:
            step = tau - resid / speed
        else:
            step = -1.0  # force the bisection fallback
        tau = step if lo < step < hi else 0.5 * (lo + hi)
    raise RuntimeError(f"root finding for tau_j did not converge (d_j={d_j})")


def tau_i_headway(v_c: float, d_i: float, u_max: float, v_max: float) -> float:
    """Fastest possible time for the oncoming vehicle to reach the conflict.

    Worst case: full throttle until the speed limit, then cruise.  The two
    branches meet continuously at the distance consumed by the acceleration
    phase.
    """
    if not 0.0 <= v_c <= v_max:
        raise ValueError("oncoming speed must lie in [0, v_max]")
    accel_dist = (v_max * v_max - v_c * v_c) / (2.0 * u_max)
    if d_i <= accel_dist:
        return (-v_c + math.sqrt(v_c * v_c + 2.0 * u_max * d_i)) / u_max
    return (v_max - v_c) / u_max + (d_i - accel_dist) / v_max


def can_merge(tau_j: float, tau_i: Optional[float], tau_s: float) -> bool:
    """Merge is allowed with no oncoming vehicle, or when the turner reaches
    the conflict point at least tau_s earlier than the oncoming one can."""
    if tau_s < 0:
        raise ValueError("tau_s must be nonnegative")
    if tau_i is None:
        return True
    return tau_j <= tau_i - tau_s

"""Barrier-condition acceleration bounds for the double-integrator vehicle.

Every function here is pure: it maps a scalar vehicle state plus constraint
data to one side of an admissible acceleration interval.  The controller
assembles the interval, intersects it with the physical limits, and clamps
the reference command into it (`solve_problem1`), which is the exact argmin
of the one-dimensional tracking QP.

Bounds are reported raw (they may exceed the physical +-u_max); intersection
handles the clipping.  Gains are linear class-K coefficients except in the
rear-end chain, where the inner class-K is the square root that produces the
minimum-stopping-distance constraint.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Union

from .core import LimitsConfig

INF = float("inf")

# Floor on the bumper gap before the square root in the rear-end bound:
# Euler integration can land marginally inside the unsafe set, where the
# bound is singular.
GAP_FLOOR = 1e-6


class ControlInterval(NamedTuple):
    lo: float
    hi: float


class LeaderObservation(NamedTuple):
    """What a vehicle knows about its current leader, on its own path axis.

    ``accel`` follows the configured leader-acceleration policy: the last
    applied acceleration (constant-accel assumption) or -u_max (robust).
    When ``exists`` is false the leader is treated as infinitely far away and
    the rear-end bound is vacuous.
    """

    position: float = INF
    speed: float = 0.0
    accel: float = 0.0
    exists: bool = False


NO_LEADER = LeaderObservation()


@dataclass(frozen=True)
class Infeasible:
    """Empty intersection: the violating (max lower, min upper) pair."""

    max_lo: float
    min_hi: float


def reference_control(v: float, v_des: float, phi: float) -> float:
    """Speed-tracking feedback law, the closed-form infinite-horizon LQR policy.

    Unclamped; bounding is the interval solver's job.
    """
    return phi * (v_des - v)


def speed_bounds(v: float, limits: LimitsConfig, kappa_s: float) -> ControlInterval:
    """Admissible accelerations from the two speed barriers.

    hi keeps v <= v_max forward invariant, lo keeps v >= v_min.  With a large
    kappa_s both are far from binding until v is within u_max/kappa_s of a
    limit.
    """
    return ControlInterval(
        kappa_s * (limits.v_min - v),
        kappa_s * (limits.v_max - v),
    )


def crossing_lower_bound(delta_p: float, delta_t2: float, v: float,
                         kappa_T: float, u_max: float) -> float:
    """Lower acceleration bound forcing arrival at the line by t_upper.

    delta_p is the remaining distance to the stop line, delta_t2 the time
    left until the selected window closes.  Built from the barrier
    b = v - delta_p/delta_t2 + u_max*delta_t2/2 (reachability-at-full-throttle);
    the bound holds the barrier condition with equality.
    """
    if delta_t2 <= 0.0:
        raise ValueError("delta_t2 must be positive (advance the window first)")
    return (kappa_T * (delta_p / delta_t2 - u_max * delta_t2 / 2.0 - v)
            + (delta_p - v * delta_t2) / (delta_t2 * delta_t2)
            + u_max / 2.0)


def crossing_upper_bound(delta_p: float, delta_t1: float, v: float,
                         kappa_T: float, u_max: float) -> float:
    """Upper acceleration bound forbidding arrival at the line before t_lower.

    Only meaningful while the window has not opened; callers drop this bound
    once delta_t1 <= 0.
    """
    if delta_t1 <= 0.0:
        raise ValueError("delta_t1 must be positive (window already open)")
    return (-kappa_T * (v - delta_p / delta_t1 - u_max * delta_t1 / 2.0)
            + (delta_p - v * delta_t1) / (delta_t1 * delta_t1)
            - u_max / 2.0)


def rear_end_upper_bound(p: float, v: float, leader: LeaderObservation,
                         gamma: float, kappa: float, u_max: float) -> float:
    """Upper acceleration bound keeping the minimum-stopping-distance barrier.

    The first-order barrier is b = leader_speed - v + sqrt(2*u_max*g) with
    bumper gap g = leader_position - p - gamma; differentiating once more
    brings the control in, and a linear class-K with coefficient ``kappa``
    gives

        u <= leader_accel - u_max*(v - leader_speed)/sqrt(2*u_max*g)
                          + kappa*(leader_speed - v + sqrt(2*u_max*g))

    The same form serves real leaders (kappa = kappa_R, accel per the leader
    policy) and the virtual stopped vehicle at the stop line (kappa =
    kappa_imag, leader at line + gamma with zero speed and acceleration).

    g <= 0 means the safe set is already violated: returns -u_max (maximum
    braking).  Returns +inf when no leader exists.
    """
    if not leader.exists:
        return INF
    g = leader.position - p - gamma
    if g <= 0.0:
        return -u_max
    s = math.sqrt(2.0 * u_max * max(g, GAP_FLOOR))
    dv = leader.speed - v
    return leader.accel + u_max * dv / s + kappa * (dv + s)


def intersect_bounds(intervals: Iterable[ControlInterval],
                     u_max: float) -> Union[ControlInterval, Infeasible]:
    """Intersection of the given intervals with the physical limits [-u_max, u_max].

    An empty input list leaves just the physical limits.  An empty
    intersection is reported with the violating pair so the planner can
    advance the crossing window.
    """
    lo = -u_max
    hi = u_max
    for ivl in intervals:
        if ivl.lo > lo:
            lo = ivl.lo
        if ivl.hi < hi:
            hi = ivl.hi
    if lo > hi:
        return Infeasible(lo, hi)
    return ControlInterval(max(lo, -u_max), min(hi, u_max))


def solve_problem1(u_ref: float, bounds: ControlInterval) -> float:
    """Argmin of (u_ref - u)^2 over [lo, hi]: clamp, since the objective is
    a 1-D convex quadratic."""
    lo, hi = bounds
    if lo > hi:
        raise ValueError(f"empty bounds [{lo}, {hi}] reached the solver: planner bug")
    if u_ref < lo:
        return lo
    if u_ref > hi:
        return hi
    return u_ref

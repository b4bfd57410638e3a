"""Per-CAV decision logic: crossing-window selection and revision, braking-mode
switching, and the per-tick control loop that assembles all acceleration
bounds and emits one action.

The loop enforces, in order:
  1. window validity (full-throttle reachability and speed-bound feasibility,
     re-checked every tick; failures advance the window index k),
  2. the braking-mode switch (crossing-time brake vs. virtual stopped vehicle
     at the line, chosen by the no-overshoot condition on the time to window
     opening),
  3. interval feasibility (a crossing-induced empty interval also advances k,
     which always succeeds because later windows relax the lower crossing
     bound).

A window advance is deferred while the vehicle is moving too fast to stop
before the line: at that point it is committed to cross, and handing it a
later window would command an unachievable stop.  The virtual-stopped-vehicle
bound is kept active whenever the selected window has not opened yet (it is
almost never binding in crossing-time mode), which guarantees the vehicle is
always stoppable when a switch or advance does occur.
"""

from __future__ import annotations

import enum
import math
from typing import Optional, Sequence, Tuple

from .cbf import (
    LeaderObservation,
    reference_control,
    rear_end_upper_bound,
)
from .core import CrossingWindow, GainsConfig, LimitsConfig, SignalSchedule, VehicleState

MAX_ADVANCE_CYCLES = 10   # a window search beyond this many cycles aborts the run
V_STANDSTILL = 1e-3       # m/s, "stopped" for the standstill-conflict diagnosis

# The reachability re-check is blind to leaders; a marginally slow leader can
# drag a follower past the window close faster than the follower can react.
# Re-validating against (t_upper - margin) fails over to the next window while
# a stop is still achievable.
REVALIDATION_MARGIN = 1.0  # s


class BrakingMode(enum.Enum):
    CROSSING_TIME = "crossing_time"
    REAR_END_VIRTUAL = "rear_end_virtual"


class WindowSearchError(RuntimeError):
    """No feasible crossing window within the advance-cycle budget."""


class CavPlannerState:
    """Mutable per-approach planner state for one CAV.

    ``switch_count`` counts crossing-time -> virtual-vehicle transitions only;
    it must never exceed 1 over a single approach.
    """

    __slots__ = (
        "window", "mode", "crossed", "entered_at", "switch_count",
        "p_tr", "stop_standoff",
        "advances", "infeasible_events", "infeasible_resolved",
        "deferred_advances", "cross_yields", "standstill_conflicts", "last_tag",
    )

    def __init__(self, window: CrossingWindow, entered_at: float, p_tr: float,
                 stop_standoff: float = 0.25):
        self.window = window
        self.mode: Optional[BrakingMode] = None  # set on the first tick
        self.crossed = False
        self.entered_at = entered_at
        self.switch_count = 0
        self.p_tr = p_tr
        self.stop_standoff = stop_standoff
        # diagnostics consumed by the simulator's event log
        self.advances = 0
        self.infeasible_events = 0
        self.infeasible_resolved = 0
        self.deferred_advances = 0
        self.cross_yields = 0
        self.standstill_conflicts = 0
        self.last_tag = ""


def min_crossing_time(v: float, delta_p: float, u_max: float) -> float:
    """Minimum time to cover delta_p at full throttle from speed v.

    A window whose remaining duration is below this is unreachable and must
    be rejected (checked at selection and re-checked continuously).
    """
    return (math.sqrt(v * v + 2.0 * u_max * delta_p) - v) / u_max


def vmax_feasible_time(v: float, v_max: float, delta_p: float) -> float:
    """Minimum crossing time for which a trajectory exists that never exceeds
    v_max (constant-acceleration sufficiency condition)."""
    return 2.0 * delta_p / (v_max + v)


def window_feasible(w: CrossingWindow, now: float, v: float, delta_p: float,
                    limits: LimitsConfig, margin: float = 0.0) -> bool:
    dt2 = w.t_upper - now - margin
    return (dt2 >= min_crossing_time(v, delta_p, limits.u_max)
            and dt2 >= vmax_feasible_time(v, limits.v_max, delta_p))


def select_window(windows: Sequence[CrossingWindow], now: float, v: float,
                  delta_p: float, limits: LimitsConfig) -> CrossingWindow:
    """Earliest window passing both feasibility conditions.

    Raises LookupError on an empty candidate set; the caller extends its
    horizon by one cycle and retries (the periodic schedule guarantees
    termination).
    """
    for w in windows:
        if window_feasible(w, now, v, delta_p, limits):
            return w
    raise LookupError("no feasible crossing window in the candidate list")


def initial_window(schedule: SignalSchedule, now: float, v: float,
                   delta_p: float, limits: LimitsConfig) -> CrossingWindow:
    """Window selected on entering the traffic-light region: the smallest k
    that is feasible (with the re-validation margin, so the choice is not
    retracted on the next tick), searched over at most MAX_ADVANCE_CYCLES
    cycles."""
    k = schedule.first_window_at_or_after(now)
    k_cap = k + MAX_ADVANCE_CYCLES * schedule.greens_per_cycle
    while k <= k_cap:
        w = schedule.window(k)
        if window_feasible(w, now, v, delta_p, limits, REVALIDATION_MARGIN):
            return w
        k += 1
    raise WindowSearchError(
        f"no feasible window within {MAX_ADVANCE_CYCLES} cycles at t={now:.2f}")


def overshoot_safe(delta_t1: float, delta_p: float, u_max: float) -> bool:
    """True when the crossing-time brake alone cannot cause the
    stop-and-reverse pathology: the window opens soon enough that maximum
    braking over delta_t1 keeps the speed nonnegative."""
    return delta_t1 <= math.sqrt(2.0 * delta_p / u_max)


def braking_mode(delta_t1: float, delta_p: float, u_max: float) -> BrakingMode:
    """Fig.-2 switch: brake via the upper crossing bound while overshoot-safe,
    else via a virtual stopped vehicle at the line."""
    if overshoot_safe(delta_t1, delta_p, u_max):
        return BrakingMode.CROSSING_TIME
    return BrakingMode.REAR_END_VIRTUAL


def cav_tick(state: VehicleState, planner: CavPlannerState,
             leader: LeaderObservation, schedule: SignalSchedule,
             gains: GainsConfig, limits: LimitsConfig,
             now: float) -> Tuple[float, CavPlannerState]:
    """One control step: returns the applied acceleration and the (mutated)
    planner state.

    Pre-crossing, the interval is {physical} ∩ {speed} ∩ {rear-end, real
    leader} ∩ {crossing bounds or virtual-vehicle substitute per mode};
    post-crossing the crossing-related bounds are excluded.  An action is
    emitted on every call.
    """
    p = state.position
    v = state.speed
    u_max = limits.u_max
    kappa_s = gains.kappa_s
    u_ref = reference_control(v, limits.v_des, gains.phi)

    # window-independent bounds
    lo = kappa_s * (limits.v_min - v)
    lo_tag = "speed_lo"
    hi = kappa_s * (limits.v_max - v)
    hi_tag = "speed_hi"
    if leader.exists:
        rb = rear_end_upper_bound(p, v, leader, limits.gamma, gains.kappa_R, u_max)
        if rb < hi:
            hi = rb
            hi_tag = "rear"

    if not planner.crossed:
        delta_p = planner.p_tr - p
        g_virtual = delta_p - planner.stop_standoff
        can_stop = v * v <= 2.0 * u_max * g_virtual if g_virtual > 0.0 else v <= V_STANDSTILL

        window = planner.window
        k_cap = window.k + MAX_ADVANCE_CYCLES * schedule.greens_per_cycle

        def _next_feasible(after_k: int) -> CrossingWindow:
            k = after_k + 1
            while k <= k_cap:
                w = schedule.window(k)
                if window_feasible(w, now, v, delta_p, limits, REVALIDATION_MARGIN):
                    return w
                k += 1
            raise WindowSearchError(
                f"no feasible window within {MAX_ADVANCE_CYCLES} cycles at t={now:.2f}")

        # continuous re-validation: the reachability condition is exactly the
        # crossing barrier's nonnegativity, so holding it here is what lets
        # the bound below stay dormant while the window has not opened
        if not window_feasible(window, now, v, delta_p, limits, REVALIDATION_MARGIN):
            if can_stop:
                window = _next_feasible(window.k)
                planner.window = window
                planner.advances += 1
            else:
                planner.deferred_advances += 1

        virtual_leader = LeaderObservation(
            planner.p_tr - planner.stop_standoff + limits.gamma, 0.0, 0.0, True)

        while True:
            dt1 = window.t_lower - now
            dt2 = window.t_upper - now
            mode = braking_mode(dt1, delta_p, u_max)

            cross_lo = -math.inf
            if dt2 > 1e-9:
                cross_lo = (gains.kappa_T * (delta_p / dt2 - u_max * dt2 / 2.0 - v)
                            + (delta_p - v * dt2) / (dt2 * dt2) + u_max / 2.0)

            w_hi = hi
            w_hi_tag = hi_tag
            w_lo = lo
            w_lo_tag = lo_tag
            if dt1 > 0.0:
                # window not open: the virtual stopped vehicle at the line is
                # always active (stoppability insurance in either mode) and
                # the lower crossing bound binds only when consistent with
                # the braking side; it never forces a window advance here
                vb = rear_end_upper_bound(p, v, virtual_leader, limits.gamma,
                                          gains.kappa_imag, u_max)
                if vb < w_hi:
                    w_hi = vb
                    w_hi_tag = "virtual"
                if mode is BrakingMode.CROSSING_TIME:
                    ch = (-gains.kappa_T * (v - delta_p / dt1 - u_max * dt1 / 2.0)
                          + (delta_p - v * dt1) / (dt1 * dt1) - u_max / 2.0)
                    if ch < w_hi:
                        w_hi = ch
                        w_hi_tag = "cross_hi"
                if w_lo < cross_lo <= w_hi:
                    w_lo = cross_lo
                    w_lo_tag = "cross_lo"
                break

            # window open: the lower crossing bound is enforced against the
            # physical and speed limits; when it exceeds them the interval is
            # empty and a later window must be selected (its larger time-to-
            # close relaxes the bound).  A conflict with the rear-end bound
            # instead yields the crossing push for the tick: the blockage is
            # a leader transient, and reachability is monitored separately.
            eff_hi = w_hi
            eff_hi_tag = w_hi_tag
            if eff_hi > u_max:
                eff_hi = u_max
                eff_hi_tag = "phys"
            if cross_lo <= eff_hi:
                if cross_lo > w_lo:
                    w_lo = cross_lo
                    w_lo_tag = "cross_lo"
                break
            if eff_hi_tag == "rear":
                planner.cross_yields += 1
                break
            planner.infeasible_events += 1
            if not can_stop:
                planner.deferred_advances += 1
                break
            window = _next_feasible(window.k)
            planner.window = window
            planner.advances += 1
            planner.infeasible_resolved += 1

        if planner.mode is BrakingMode.CROSSING_TIME and mode is BrakingMode.REAR_END_VIRTUAL:
            planner.switch_count += 1
        planner.mode = mode
        lo = w_lo
        lo_tag = w_lo_tag
        hi = w_hi
        hi_tag = w_hi_tag

    # physical limits close the interval
    if lo < -u_max:
        lo = -u_max
        lo_tag = "phys"
    if hi > u_max:
        hi = u_max
        hi_tag = "phys"

    if lo > hi:
        # non-crossing conflict; only reachable at (near) standstill against
        # a braking leader, where remaining stopped is exact
        if v <= V_STANDSTILL:
            planner.standstill_conflicts += 1
        u = hi if hi > -u_max else -u_max
        planner.last_tag = hi_tag
        return u, planner

    if u_ref < lo:
        u = lo
        planner.last_tag = lo_tag
    elif u_ref > hi:
        u = hi
        planner.last_tag = hi_tag
    else:
        u = u_ref
        planner.last_tag = "ref"
    return u, planner

"""Domain types, unit conventions, and the periodic traffic-signal schedule.

Units are SI throughout: positions in meters along a vehicle's fixed path
(monotone increasing in the travel direction), speeds in m/s, accelerations
in m/s^2, times in seconds.  Time is continuous-valued; schedule window
arithmetic never snaps to simulation ticks.

All types here are immutable value objects and safe to share across threads.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import List, NamedTuple, Sequence, Tuple


class VehicleState(NamedTuple):
    """Longitudinal state of one vehicle on its fixed path."""

    position: float
    speed: float
    accel_applied: float = 0.0


class VehicleKind(enum.Enum):
    CAV = "cav"
    HDV = "hdv"


@dataclass(frozen=True)
class LimitsConfig:
    """Physical and regulatory limits shared by every vehicle.

    ``v_min`` is fixed to 0 (the speed floor is "no reversing"), but it is
    carried explicitly so the lower speed bound can be written verbatim
    against it.
    """

    u_max: float = 5.0       # m/s^2, symmetric accel/brake limit
    v_max: float = 22.0      # m/s
    v_min: float = 0.0       # m/s, fixed
    v_des: float = 12.0      # m/s, tracked by the reference law
    gamma: float = 4.0       # m, standstill distance between sequential vehicles

    def __post_init__(self):
        if self.u_max <= 0:
            raise ValueError("u_max must be positive")
        if not (self.v_min == 0.0 and self.v_min < self.v_des <= self.v_max):
            raise ValueError("require 0 = v_min < v_des <= v_max")
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")


@dataclass(frozen=True)
class GainsConfig:
    """Controller gains (all 1/s) plus the merge safety margin (s).

    Small gains make a bound proactive (the vehicle reacts far from the
    constraint boundary); large gains make it reactive.  ``kappa_s`` defaults
    very large so the speed bounds approximate a step function while staying
    finite.
    """

    phi: float = 0.25          # reference-law gain
    kappa_s: float = 1.0e3     # speed-bound gain
    kappa_T: float = 0.04      # crossing-window gain
    kappa_R: float = 0.2       # rear-end gain, real leaders
    kappa_imag: float = 0.05   # rear-end gain, virtual stopped vehicle at the line
    tau_s: float = 1.5         # s, merge safety margin

    def __post_init__(self):
        for name in ("phi", "kappa_s", "kappa_T", "kappa_R", "kappa_imag", "tau_s"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be strictly positive")


class Color(enum.Enum):
    GREEN = "green"
    RED = "red"


class CrossingWindow(NamedTuple):
    """One green interval [t_lower, t_upper], with its schedule-global index k.

    k counts green windows from schedule time zero, so window k+1 always
    starts strictly after window k ends and a re-selection can only move k up.
    """

    k: int
    t_lower: float
    t_upper: float


@dataclass(frozen=True)
class SignalSchedule:
    """Periodic green/red phase program for one approach.

    ``phases`` is an ordered list of (color, duration) pairs that repeats
    forever; ``phase_offset`` shifts the whole program along absolute time.
    Yellow is not modeled: a scenario encodes clearance time by shortening
    its green phases.
    """

    phases: Tuple[Tuple[Color, float], ...] = ((Color.GREEN, 15.0), (Color.RED, 15.0))
    phase_offset: float = 0.0
    # derived, filled in __post_init__
    cycle_length: float = field(init=False, default=0.0)
    _greens: Tuple[Tuple[float, float], ...] = field(init=False, default=())

    def __post_init__(self):
        if not self.phases:
            raise ValueError("schedule needs at least one phase")
        t = 0.0
        segs: List[Tuple[float, float]] = []
        for color, dur in self.phases:
            if dur <= 0:
                raise ValueError("phase durations must be positive")
            if color is Color.GREEN:
                segs.append((t, t + dur))
            t += dur
        cycle = t
        if not segs:
            raise ValueError("schedule needs at least one green phase")
        # merge greens that touch across the cycle boundary
        if len(segs) > 1 and segs[0][0] == 0.0 and segs[-1][1] == cycle:
            first = segs.pop(0)
            last = segs.pop()
            segs.append((last[0], cycle + first[1]))
        if len(segs) == 1 and segs[0][1] - segs[0][0] >= cycle:
            raise ValueError("schedule must contain some red time")
        object.__setattr__(self, "cycle_length", cycle)
        object.__setattr__(self, "_greens", tuple(segs))

    @property
    def greens_per_cycle(self) -> int:
        return len(self._greens)

    def is_green(self, t: float) -> bool:
        """Signal color at absolute time t.  Green intervals are half-open [s, e)."""
        local = (t - self.phase_offset) % self.cycle_length
        for s, e in self._greens:
            if s <= local < e or s <= local + self.cycle_length < e:
                return True
        return False

    def window(self, k: int) -> CrossingWindow:
        """The k-th green window (k >= 0) in absolute time, unclipped."""
        n = len(self._greens)
        q, r = divmod(k, n)
        s, e = self._greens[r]
        base = self.phase_offset + q * self.cycle_length
        return CrossingWindow(k, base + s, base + e)

    def first_window_at_or_after(self, t: float) -> int:
        """Smallest k whose window has not ended by time t (t_upper > t)."""
        n = len(self._greens)
        q = math.floor((t - self.phase_offset) / self.cycle_length)
        # a green merged across the cycle boundary belongs to cycle q-1
        k = max((q - 1) * n, 0)
        while self.window(k).t_upper <= t:
            k += 1
        return k


def green_windows(schedule: SignalSchedule, now: float, horizon: float) -> List[CrossingWindow]:
    """Green windows overlapping [now, now + horizon], clipped to it.

    Returned windows are disjoint and chronologically ordered; an all-red
    horizon yields an empty list (callers extend the horizon, which the
    periodic schedule always eventually rewards).
    """
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    end = now + horizon
    out: List[CrossingWindow] = []
    k = schedule.first_window_at_or_after(now)
    while True:
        w = schedule.window(k)
        if w.t_lower >= end:
            break
        lo = max(w.t_lower, now)
        hi = min(w.t_upper, end)
        if hi > lo:
            out.append(CrossingWindow(w.k, lo, hi))
        k += 1
    return out

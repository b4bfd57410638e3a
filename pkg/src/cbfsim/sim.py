"""World stepping: four-approach topology, signal clocks, Poisson spawning,
leader resolution across turning movements, fixed-step integration, crossing
and merge detection, and per-vehicle metrics.

Update discipline: within a tick all controllers read the previous committed
world (synchronous update), then positions/speeds are committed front-to-back
per corridor, then discrete events (crossings, right-turn merges, spawns,
despawns) are resolved.  Runs are deterministic for a given seed and config.

Integration is semi-implicit Euler (v first, then p with the new v) at a
fixed dt.  The applied acceleration is capped into [-v/dt, (v_max - v)/dt]
before the step, the discrete-time equivalent of holding the two speed
barriers at equality, so recorded speeds stay in [0, v_max] exactly.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import turn as turn_mod
from .cbf import (
    INF,
    LeaderObservation,
    reference_control,
    rear_end_upper_bound,
)
from .core import (
    CrossingWindow,
    GainsConfig,
    LimitsConfig,
    SignalSchedule,
    VehicleKind,
    VehicleState,
)
from .hdv import IdmParams, idm_accel
from .planner import BrakingMode, CavPlannerState, cav_tick, initial_window

EPS_GAP = 0.05    # m, integration tolerance used by the rear-end safety scan
EPS_V = 0.01      # m/s, speed-bound tolerance
V_GATE = 0.5      # m/s, crawl speed below which a turner counts as stopped
GATE_DISTANCE = 1.5  # m, how far short of the line the merge check may fire


class Movement(enum.Enum):
    THROUGH = "through"
    RIGHT_TURN = "right"


class LeaderAccelPolicy(enum.Enum):
    """How the follower fills in the leader's acceleration term.

    CONSTANT uses the leader's last applied acceleration; ROBUST substitutes
    -u_max, the strongest deceleration the leader could be performing.
    """
    CONSTANT = "constant"
    ROBUST = "robust"


@dataclass(frozen=True)
class IntersectionTopology:
    """Four symmetric approaches with single through lanes and right turns.

    Positions run 0 (region entrance) -> region_length (stop line) ->
    region_length + exit_length (despawn).  A right turn from approach a
    merges into approach (a+1) % 4 at a conflict point conflict_offset past
    the receiving stop line; the turn path from the turner's stop line to
    the conflict point is turn_path_length long, so the merge entry point on
    the receiving axis is conflict_offset - turn_path_length past the
    receiving stop line (it must land beyond the line, where red-phase
    queues never stand).
    """

    region_length: float = 200.0
    exit_length: float = 100.0
    conflict_offset: float = 12.0
    turn_path_length: float = 6.0
    sensing_range: float = 200.0
    stop_standoff: float = 0.25
    n_approaches: int = 4

    def __post_init__(self):
        if self.region_length <= 0 or self.exit_length <= 0:
            raise ValueError("lengths must be positive")
        if not 0 < self.turn_path_length < self.conflict_offset:
            raise ValueError("merge entry must land beyond the receiving stop line")
        if self.conflict_offset > self.exit_length:
            raise ValueError("conflict point must lie on the receiving corridor")

    @property
    def stop_line(self) -> float:
        return self.region_length

    @property
    def corridor_length(self) -> float:
        return self.region_length + self.exit_length

    @property
    def conflict_position(self) -> float:
        return self.region_length + self.conflict_offset

    @property
    def merge_entry(self) -> float:
        return self.conflict_position - self.turn_path_length

    def turn_target(self, approach: int) -> int:
        return (approach + 1) % self.n_approaches


class Vehicle:
    """Mutable simulation vehicle (single-writer: only World.step touches it)."""

    __slots__ = ("vid", "kind", "movement", "corridor", "pos", "v", "accel",
                 "entry_t", "crossed", "cross_t", "planner", "mode_tag")

    def __init__(self, vid: int, kind: VehicleKind, movement: Movement,
                 corridor: int, pos: float, v: float, entry_t: float):
        self.vid = vid
        self.kind = kind
        self.movement = movement
        self.corridor = corridor
        self.pos = pos
        self.v = v
        self.accel = 0.0
        self.entry_t = entry_t
        self.crossed = False
        self.cross_t: Optional[float] = None
        self.planner: Optional[CavPlannerState] = None
        self.mode_tag = ""

    def state(self) -> VehicleState:
        return VehicleState(self.pos, self.v, self.accel)


@dataclass
class MetricsRecord:
    vid: int
    kind: VehicleKind
    movement: Movement
    corridor: int
    entry_t: float
    cross_t: Optional[float] = None
    switch_count: int = 0
    window_advances: int = 0
    infeasible_events: int = 0
    infeasible_resolved: int = 0

    @property
    def dwell(self) -> Optional[float]:
        if self.cross_t is None:
            return None
        return self.cross_t - self.entry_t


def leader_observation(leader: Optional[Vehicle], policy: LeaderAccelPolicy,
                       u_max: float) -> LeaderObservation:
    """Observation of the given leader (None means a free road ahead)."""
    if leader is None:
        return LeaderObservation()
    accel = leader.accel if policy is LeaderAccelPolicy.CONSTANT else -u_max
    return LeaderObservation(leader.pos, leader.v, accel, True)


class World:
    """Simulation state for one intersection.

    ``schedules`` maps each approach to its signal program (opposing pairs
    normally share one).  ``arrival_rate`` is the total veh/h over all
    approaches, split equally.
    """

    def __init__(self, topology: IntersectionTopology,
                 schedules: Sequence[SignalSchedule],
                 limits: LimitsConfig, gains: GainsConfig, idm: IdmParams,
                 dt: float = 0.05,
                 arrival_rate: float = 0.0, cav_fraction: float = 0.5,
                 right_turn_fraction: float = 0.2, spawn_speed: float = 12.0,
                 leader_policy: LeaderAccelPolicy = LeaderAccelPolicy.CONSTANT,
                 seed: int = 0, record_trace: bool = False):
        if dt <= 0:
            raise ValueError("dt must be positive")
        if len(schedules) != topology.n_approaches:
            raise ValueError("one schedule per approach required")
        if not 0.0 <= cav_fraction <= 1.0:
            raise ValueError("cav_fraction must lie in [0, 1]")
        # a vehicle stopped at the receiving stop line must clear the merge
        # entry point by more than a standstill gap, or commits would
        # materialize a turner inside it
        if topology.merge_entry - (topology.stop_line - topology.stop_standoff) \
                <= limits.gamma + 0.5:
            raise ValueError("conflict_offset - turn_path_length too small for "
                             "the configured standstill gap")
        self.topology = topology
        self.schedules = list(schedules)
        self.limits = limits
        self.gains = gains
        self.idm = idm
        self.dt = dt
        self.arrival_rate = arrival_rate
        self.cav_fraction = cav_fraction
        self.right_turn_fraction = right_turn_fraction
        self.spawn_speed = min(spawn_speed, limits.v_max)
        self.leader_policy = leader_policy
        self.rng = np.random.default_rng(seed)
        self.record_trace = record_trace

        self.t = 0.0
        self.tick = 0
        self.spawning_enabled = arrival_rate > 0.0
        self.corridors: List[List[Vehicle]] = [[] for _ in range(topology.n_approaches)]
        self.vehicles: Dict[int, Vehicle] = {}
        self._next_vid = 0
        self.metrics: Dict[int, MetricsRecord] = {}
        self.events: List[tuple] = []
        self.trace: List[tuple] = []
        self.violations = {"rear_end": 0, "speed": 0, "cav_red_crossing": 0}
        self.unresolved_infeasible = 0
        self.velocity_clamp_activations = 0  # post-guard clamp; stays 0 by construction
        self.speed_guard_activations = 0
        self.total_vehicle_ticks = 0
        self.uncrossed = 0

        # arrival machinery: one Poisson stream per approach, drawn lazily
        n = topology.n_approaches
        self.mean_headway = (n * 3600.0 / arrival_rate) if arrival_rate > 0 else INF
        self._next_arrival = [self._draw_headway() for _ in range(n)] \
            if self.spawning_enabled else [INF] * n
        self._pending: List[List[Tuple[VehicleKind, Movement]]] = [[] for _ in range(n)]

        # tau_j is state-independent from standstill: one value per vehicle kind
        self._tau_j_cav = turn_mod.solve_tau_j(topology.turn_path_length,
                                               limits.v_des, gains.phi)
        self._tau_j_hdv = turn_mod.solve_tau_j(topology.turn_path_length,
                                               idm.v_des, gains.phi)

    # ------------------------------------------------------------------ spawning

    def _draw_headway(self) -> float:
        return float(self.rng.exponential(self.mean_headway))

    def _draw_vehicle(self) -> Tuple[VehicleKind, Movement]:
        kind = VehicleKind.CAV if self.rng.random() < self.cav_fraction else VehicleKind.HDV
        movement = (Movement.RIGHT_TURN if self.rng.random() < self.right_turn_fraction
                    else Movement.THROUGH)
        return kind, movement

    def _entrance_clear(self, approach: int) -> bool:
        """Spawn deferral: the entrance must be at least a standstill gap plus
        the spawning vehicle's stopping distance (plus one tick of travel)
        behind the rearmost vehicle."""
        lane = self.corridors[approach]
        if not lane:
            return True
        v0 = self.spawn_speed
        need = self.limits.gamma + v0 * v0 / (2.0 * self.limits.u_max) + v0 * self.dt
        return lane[-1].pos >= need

    def spawn_vehicle(self, approach: int, kind: VehicleKind, movement: Movement,
                      speed: Optional[float] = None) -> Vehicle:
        """Create a vehicle at the region entrance; CAVs get a planner
        immediately (the whole region is inside the communication zone)."""
        v0 = self.spawn_speed if speed is None else speed
        veh = Vehicle(self._next_vid, kind, movement, approach, 0.0, v0, self.t)
        self._next_vid += 1
        if kind is VehicleKind.CAV and movement is Movement.THROUGH:
            w = initial_window(self.schedules[approach], self.t, v0,
                               self.topology.stop_line, self.limits)
            veh.planner = CavPlannerState(w, self.t, self.topology.stop_line,
                                          self.topology.stop_standoff)
        elif kind is VehicleKind.CAV:
            # turners never use crossing windows; state tracks the approach only
            veh.planner = CavPlannerState(CrossingWindow(-1, 0.0, 1e-9), self.t,
                                          self.topology.stop_line,
                                          self.topology.stop_standoff)
            veh.planner.mode = BrakingMode.REAR_END_VIRTUAL
        self.corridors[approach].append(veh)
        self.vehicles[veh.vid] = veh
        self.uncrossed += 1
        self.metrics[veh.vid] = MetricsRecord(veh.vid, kind, movement, approach, self.t)
        self.events.append((self.t, "spawn", veh.vid, approach,
                            kind.value, movement.value))
        return veh

    def _spawn_arrivals(self):
        for a in range(self.topology.n_approaches):
            while self._next_arrival[a] <= self.t:
                self._pending[a].append(self._draw_vehicle())
                self._next_arrival[a] += self._draw_headway()
            if self._pending[a] and self._entrance_clear(a):
                kind, movement = self._pending[a].pop(0)
                self.spawn_vehicle(a, kind, movement)

    # ------------------------------------------------------------------ control

    def resolve_leader(self, veh: Vehicle) -> LeaderObservation:
        """Nearest vehicle ahead on the same corridor (including merged-in
        turners); absent leaders observe as infinitely far away."""
        lane = self.corridors[veh.corridor]
        idx = lane.index(veh)
        lead = lane[idx - 1] if idx > 0 else None
        return leader_observation(lead, self.leader_policy, self.limits.u_max)

    def _hdv_accel(self, veh: Vehicle, leader: Optional[Vehicle]) -> float:
        v = veh.v
        u_max = self.limits.u_max
        if leader is not None:
            gap = leader.pos - veh.pos
            u = idm_accel(v, v - leader.v, gap, self.idm, u_max)
        else:
            u = idm_accel(v, 0.0, INF, self.idm, u_max)
        if not veh.crossed:
            stop_target = self.topology.stop_line - self.topology.stop_standoff
            dist = stop_target - veh.pos
            if veh.movement is Movement.RIGHT_TURN:
                hold = dist > -self.topology.stop_standoff
            else:
                # red light: stop only if a stop is still achievable
                # (otherwise the driver is committed and clears the box)
                hold = (not self.schedules[veh.corridor].is_green(self.t)
                        and dist > -self.topology.stop_standoff
                        and v * v <= 2.0 * u_max * max(dist, 0.0) + 1e-9)
            if hold:
                gap_v = stop_target + self.idm.gamma - veh.pos
                u_v = idm_accel(v, v, gap_v, self.idm, u_max)
                if u_v < u:
                    u = u_v
        veh.mode_tag = "idm"
        return u

    def _cav_turner_accel(self, veh: Vehicle, obs: LeaderObservation) -> float:
        """Pre-merge controller for a right-turning CAV: reference tracking
        under speed, real-leader, and always-on virtual-stop bounds.

        The stop at the line is ordinary car-following against a parked
        virtual vehicle, so it carries the real-leader gain (the virtual-
        vehicle gain belongs to the through traffic's braking-mode switch).
        """
        v = veh.v
        limits = self.limits
        gains = self.gains
        u_max = limits.u_max
        lo = max(-u_max, gains.kappa_s * (limits.v_min - v))
        hi = min(u_max, gains.kappa_s * (limits.v_max - v))
        if obs.exists:
            hi = min(hi, rear_end_upper_bound(veh.pos, v, obs, limits.gamma,
                                              gains.kappa_R, u_max))
        virt = LeaderObservation(
            self.topology.stop_line - self.topology.stop_standoff + limits.gamma,
            0.0, 0.0, True)
        hi = min(hi, rear_end_upper_bound(veh.pos, v, virt, limits.gamma,
                                          gains.kappa_R, u_max))
        veh.mode_tag = "rear_end_virtual"
        if hi < lo:
            return max(hi, -u_max)
        u_ref = reference_control(v, limits.v_des, gains.phi)
        return min(max(u_ref, lo), hi)

    def _compute_accels(self) -> List[Tuple[Vehicle, float]]:
        out = []
        policy = self.leader_policy
        u_max = self.limits.u_max
        for a, lane in enumerate(self.corridors):
            lead_veh: Optional[Vehicle] = None
            for veh in lane:
                if veh.kind is VehicleKind.HDV:
                    u = self._hdv_accel(veh, lead_veh)
                elif veh.movement is Movement.RIGHT_TURN and not veh.crossed:
                    obs = leader_observation(lead_veh, policy, u_max)
                    u = self._cav_turner_accel(veh, obs)
                else:
                    obs = leader_observation(lead_veh, policy, u_max)
                    planner = veh.planner
                    k_before = planner.window.k
                    mode_before = planner.mode
                    resolved_before = planner.infeasible_resolved
                    events_before = planner.infeasible_events
                    u, _ = cav_tick(veh.state(), planner, obs,
                                    self.schedules[a], self.gains, self.limits,
                                    self.t)
                    veh.mode_tag = planner.mode.value if planner.mode else ""
                    if planner.window.k != k_before:
                        self.events.append((self.t, "window_advance", veh.vid,
                                            k_before, planner.window.k))
                    if mode_before is not None and planner.mode is not mode_before:
                        self.events.append((self.t, "mode_switch", veh.vid,
                                            mode_before.value, planner.mode.value))
                    new_events = planner.infeasible_events - events_before
                    if new_events:
                        if planner.infeasible_resolved - resolved_before < new_events:
                            self.unresolved_infeasible += 1
                        self.events.append((self.t, "infeasible", veh.vid,
                                            new_events,
                                            planner.infeasible_resolved - resolved_before))
                out.append((veh, u))
                lead_veh = veh
        return out

    # ------------------------------------------------------------------ stepping

    def step(self):
        """Advance the world by one tick."""
        dt = self.dt
        limits = self.limits
        v_max = limits.v_max
        u_max = limits.u_max
        stop_line = self.topology.stop_line

        accels = self._compute_accels()
        self.total_vehicle_ticks += len(accels)

        t_new = self.t + dt
        for veh, u in accels:
            # discrete-time stand-in for the speed barriers at equality
            floor = -veh.v / dt
            ceil = (v_max - veh.v) / dt
            u_app = u
            if u_app < floor:
                u_app = floor
                self.speed_guard_activations += 1
            elif u_app > ceil:
                u_app = ceil
                self.speed_guard_activations += 1
            p_old = veh.pos
            v_new = veh.v + u_app * dt
            if v_new < 0.0 or v_new > v_max:  # belt over braces; counted, never expected
                self.velocity_clamp_activations += 1
                v_new = min(max(v_new, 0.0), v_max)
            veh.v = v_new
            veh.pos = p_old + v_new * dt
            veh.accel = u_app
            if v_new < -EPS_V or v_new > v_max + EPS_V:
                self.violations["speed"] += 1
                self.events.append((self.t, "speed_violation", veh.vid, v_new))
            # crossing detection for non-turners (turners cross by merging)
            if not veh.crossed and veh.pos >= stop_line and \
                    not (veh.movement is Movement.RIGHT_TURN):
                frac = 1.0 if veh.pos == p_old else (stop_line - p_old) / (veh.pos - p_old)
                t_cross = self.t + dt * max(0.0, min(1.0, frac))
                self._mark_crossed(veh, t_cross)

        # rear-end safety scan on committed positions
        for lane in self.corridors:
            for i in range(1, len(lane)):
                gap = lane[i - 1].pos - lane[i].pos
                if gap < limits.gamma - EPS_GAP:
                    self.violations["rear_end"] += 1
                    self.events.append((self.t, "gap_violation", lane[i].vid,
                                        lane[i - 1].vid, gap))

        self.t = t_new
        self.tick += 1
        self._evaluate_merges()
        self._despawn()
        if self.spawning_enabled:
            self._spawn_arrivals()
        if self.record_trace:
            for lane in self.corridors:
                for veh in lane:
                    self.trace.append((round(self.t, 6), veh.vid, veh.kind.value,
                                       veh.pos, veh.v, veh.accel, veh.mode_tag,
                                       veh.planner.last_tag if veh.planner else "idm"))

    def _mark_crossed(self, veh: Vehicle, t_cross: float):
        veh.crossed = True
        veh.cross_t = t_cross
        self.uncrossed -= 1
        if veh.planner is not None:
            veh.planner.crossed = True
        rec = self.metrics[veh.vid]
        rec.cross_t = t_cross
        in_window = True
        if veh.kind is VehicleKind.CAV and veh.movement is Movement.THROUGH:
            w = veh.planner.window
            tol = self.dt
            in_window = (w.t_lower - tol) <= t_cross <= (w.t_upper + tol)
            if not in_window:
                self.violations["cav_red_crossing"] += 1
                self.events.append((self.t, "red_crossing", veh.vid, t_cross,
                                    w.t_lower, w.t_upper))
        self.events.append((self.t, "cross", veh.vid, round(t_cross, 9),
                            int(in_window)))

    # ------------------------------------------------------------------ turns

    def _oncoming_tau_i(self, receiving: int, now: float) -> Optional[float]:
        """Fastest-arrival headway of the nearest conflicting vehicle, or None
        when nothing is within sensing range of the conflict point.

        A red-facing vehicle that can still stop before its line will stop
        (both vehicle kinds hold exactly then), so its worst case is a full-
        throttle launch when its green begins, from no closer than its stop
        line.  An unstoppable one is a committed runner and keeps the plain
        full-throttle headway.
        """
        topo = self.topology
        p_c = topo.conflict_position
        nearest: Optional[Vehicle] = None
        for veh in self.corridors[receiving]:
            if veh.pos < p_c and p_c - veh.pos <= topo.sensing_range + topo.conflict_offset:
                nearest = veh
                break  # lanes are front-first ordered: the first hit is nearest
        if nearest is None:
            return None
        d_i = p_c - nearest.pos
        u_max = self.limits.u_max
        v_max = self.limits.v_max
        sched = self.schedules[receiving]
        if not sched.is_green(now) and not nearest.crossed and nearest.pos < topo.stop_line:
            dist = (topo.stop_line - topo.stop_standoff) - nearest.pos
            if nearest.v * nearest.v <= 2.0 * u_max * max(dist, 0.0) + 1e-9:
                k = sched.first_window_at_or_after(now)
                time_to_green = max(0.0, sched.window(k).t_lower - now)
                d_launch = max(topo.conflict_offset,
                               d_i - time_to_green * v_max)
                return time_to_green + turn_mod.tau_i_headway(0.0, d_launch,
                                                              u_max, v_max)
        return turn_mod.tau_i_headway(min(nearest.v, v_max), d_i, u_max, v_max)

    def _receiving_slot_clear(self, receiving: int) -> bool:
        """Positional guard on both sides of the merge entry point (the time
        gate covers approaching traffic; this catches vehicles already in or
        just past the slot)."""
        entry = self.topology.merge_entry
        clearance = self.limits.gamma + 0.5
        ahead = None
        behind = None
        for veh in self.corridors[receiving]:  # front-first: descending positions
            if veh.pos >= entry:
                ahead = veh
            else:
                behind = veh
                break
        if ahead is not None and ahead.pos - entry < clearance:
            return False
        if behind is not None and entry - behind.pos < clearance:
            return False
        return True

    def _evaluate_merges(self):
        topo = self.topology
        for a, lane in enumerate(self.corridors):
            # only the front-most vehicle still short of the line can turn
            turner: Optional[Vehicle] = None
            for veh in lane:
                if not veh.crossed and veh.pos < topo.stop_line:
                    turner = veh
                    break
            if (turner is None or turner.movement is not Movement.RIGHT_TURN
                    or turner.v > V_GATE
                    or turner.pos < topo.stop_line - topo.stop_standoff - GATE_DISTANCE):
                continue
            receiving = topo.turn_target(a)
            tau_i = self._oncoming_tau_i(receiving, self.t)
            tau_j = self._tau_j_cav if turner.kind is VehicleKind.CAV else self._tau_j_hdv
            if not turn_mod.can_merge(tau_j, tau_i, self.gains.tau_s):
                continue
            if not self._receiving_slot_clear(receiving):
                continue
            self._commit_merge(turner, a, receiving)

    def _commit_merge(self, veh: Vehicle, a: int, receiving: int):
        self.corridors[a].remove(veh)
        veh.corridor = receiving
        veh.pos = self.topology.merge_entry
        lane = self.corridors[receiving]
        # keep front-first ordering (descending positions)
        idx = len(lane)
        while idx > 0 and lane[idx - 1].pos < veh.pos:
            idx -= 1
        lane.insert(idx, veh)
        veh.crossed = True
        veh.cross_t = self.t
        self.uncrossed -= 1
        if veh.planner is not None:
            veh.planner.crossed = True
        rec = self.metrics[veh.vid]
        rec.cross_t = self.t
        self.events.append((self.t, "merge", veh.vid, a, receiving))

    # ------------------------------------------------------------------ lifecycle

    def _despawn(self):
        end = self.topology.corridor_length
        for lane in self.corridors:
            while lane and lane[0].pos > end:
                veh = lane.pop(0)
                self._finalize(veh)
                del self.vehicles[veh.vid]
                self.events.append((self.t, "despawn", veh.vid))

    def _finalize(self, veh: Vehicle):
        rec = self.metrics[veh.vid]
        if veh.planner is not None:
            rec.switch_count = veh.planner.switch_count
            rec.window_advances = veh.planner.advances
            rec.infeasible_events = veh.planner.infeasible_events
            rec.infeasible_resolved = veh.planner.infeasible_resolved

    def finalize_all(self):
        """Fold planner diagnostics of still-live vehicles into the metrics."""
        for veh in self.vehicles.values():
            self._finalize(veh)

    def run(self, duration: float, spawn_until: Optional[float] = None,
            drain: bool = False, max_time: float = 3600.0):
        """Step until ``duration``; optionally stop spawning at ``spawn_until``
        and keep stepping until every spawned vehicle has crossed (drain mode,
        capped at ``max_time``)."""
        if spawn_until is None:
            spawn_until = duration
        n_steps = int(round(duration / self.dt))
        for _ in range(n_steps):
            if self.t >= spawn_until:
                self.spawning_enabled = False
            self.step()
        if drain:
            self.spawning_enabled = False
            self._pending = [[] for _ in self._pending]
            while self.t < max_time and self.uncrossed > 0:
                self.step()
        self.finalize_all()

    # ------------------------------------------------------------------ metrics

    def dwell_times(self) -> List[float]:
        return [rec.dwell for rec in self.metrics.values() if rec.dwell is not None]

    def mean_dwell(self) -> float:
        d = self.dwell_times()
        return float(np.mean(d)) if d else math.nan

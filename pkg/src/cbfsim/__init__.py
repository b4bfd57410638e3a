"""Mixed CAV/HDV signalized-intersection microsimulator.

CAVs track a speed reference and are kept safe and schedule-compliant by
barrier-condition acceleration bounds (speed limits, rear-end stopping
distance, green-window crossing); HDVs follow the Intelligent Driver Model;
right turns on red use time-headway gap acceptance.
"""

from .cbf import (
    ControlInterval,
    Infeasible,
    LeaderObservation,
    crossing_lower_bound,
    crossing_upper_bound,
    intersect_bounds,
    rear_end_upper_bound,
    reference_control,
    solve_problem1,
    speed_bounds,
)
from .config import ConfigError, ScenarioConfig, SweepSpec, from_dict, load, save, to_dict
from .core import (
    Color,
    CrossingWindow,
    GainsConfig,
    LimitsConfig,
    SignalSchedule,
    VehicleKind,
    VehicleState,
    green_windows,
)
from .hdv import IdmParams, desired_gap, idm_accel
from .planner import (
    BrakingMode,
    CavPlannerState,
    WindowSearchError,
    braking_mode,
    cav_tick,
    initial_window,
    min_crossing_time,
    overshoot_safe,
    select_window,
    vmax_feasible_time,
    window_feasible,
)
from .sim import (
    IntersectionTopology,
    LeaderAccelPolicy,
    MetricsRecord,
    Movement,
    Vehicle,
    World,
    leader_observation,
)
from .turn import ConflictPoint, can_merge, position_profile, solve_tau_j, tau_i_headway

__version__ = "0.1.0"

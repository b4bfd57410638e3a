import math

import numpy as np
import pytest

from cbfsim import (
    ControlInterval,
    Infeasible,
    LeaderObservation,
    LimitsConfig,
    crossing_lower_bound,
    crossing_upper_bound,
    intersect_bounds,
    rear_end_upper_bound,
    reference_control,
    solve_problem1,
    speed_bounds,
)

U_MAX = 5.0


class TestReferenceControl:
    def test_zero_tracking_error(self):
        assert reference_control(12.0, 12.0, 0.25) == 0.0

    def test_accelerating(self):
        assert reference_control(8.0, 12.0, 0.25) == pytest.approx(1.0)

    def test_decelerating(self):
        assert reference_control(22.0, 12.0, 0.25) == pytest.approx(-2.5)


class TestSpeedBounds:
    def test_upper_boundary(self, limits):
        assert speed_bounds(limits.v_max, limits, 1.0).hi == 0.0

    def test_lower_boundary(self, limits):
        assert speed_bounds(0.0, limits, 1.0).lo == 0.0

    def test_large_gain_step_behavior(self, limits):
        assert speed_bounds(10.0, limits, 1000.0).hi == pytest.approx(12000.0)

    def test_raw_bounds_may_exceed_physical(self, limits):
        b = speed_bounds(10.0, limits, 1000.0)
        assert b.hi > limits.u_max and b.lo < -limits.u_max


class TestCrossingBounds:
    def test_lower_reduces_to_residual_on_barrier_boundary(self):
        # class-K term vanishes where v = dp/dt2 - u_max*dt2/2
        dp, dt2 = 150.0, 10.0
        v = dp / dt2 - U_MAX * dt2 / 2.0
        got = crossing_lower_bound(dp, dt2, v, 0.04, U_MAX)
        assert got == pytest.approx((dp - v * dt2) / dt2**2 + U_MAX / 2.0)

    def test_lower_hand_value(self):
        # 0.04*(10 - 50 - 12) + (200 - 240)/400 + 2.5
        expect = -2.08 - 0.1 + 2.5
        assert crossing_lower_bound(200.0, 20.0, 12.0, 0.04, U_MAX) == pytest.approx(expect)

    def test_lower_degenerate_distance(self):
        got = crossing_lower_bound(0.0, 4.0, 0.0, 0.04, U_MAX)
        assert got == pytest.approx(0.04 * (-U_MAX * 4.0 / 2.0) + U_MAX / 2.0)

    def test_lower_rejects_expired_window(self):
        with pytest.raises(ValueError):
            crossing_lower_bound(100.0, 0.0, 10.0, 0.04, U_MAX)

    def test_upper_reduces_to_residual_on_barrier_boundary(self):
        dp, dt1 = 80.0, 6.0
        v = dp / dt1 + U_MAX * dt1 / 2.0
        got = crossing_upper_bound(dp, dt1, v, 0.04, U_MAX)
        assert got == pytest.approx((dp - v * dt1) / dt1**2 - U_MAX / 2.0)

    def test_upper_hand_value(self):
        # -0.04*(12 - 20 - 25) + (200 - 120)/100 - 2.5
        expect = 1.32 + 0.8 - 2.5
        assert crossing_upper_bound(200.0, 10.0, 12.0, 0.04, U_MAX) == pytest.approx(expect)

    def test_upper_gain_free_limit(self):
        dp, dt1, v = 200.0, 10.0, 12.0
        got = crossing_upper_bound(dp, dt1, v, 1e-12, U_MAX)
        assert got == pytest.approx((dp - v * dt1) / dt1**2 - U_MAX / 2.0, abs=1e-9)

    def test_upper_rejects_open_window(self):
        with pytest.raises(ValueError):
            crossing_upper_bound(100.0, -1.0, 10.0, 0.04, U_MAX)


class TestRearEndBound:
    def test_absent_leader_is_vacuous(self):
        assert rear_end_upper_bound(0.0, 12.0, LeaderObservation(), 4.0, 0.2, U_MAX) == math.inf

    def test_matched_speeds_leave_stopping_margin_slack(self):
        # on-barrier slack: with equal speeds the barrier value is the full
        # stopping-distance term, so the bound is +kappa*sqrt(2*u_max*g)
        gamma, kappa = 4.0, 0.2
        leader = LeaderObservation(30.0, 10.0, 0.0, True)
        g = 30.0 - 0.0 - gamma
        got = rear_end_upper_bound(0.0, 10.0, leader, gamma, kappa, U_MAX)
        assert got == pytest.approx(kappa * math.sqrt(2 * U_MAX * g))

    def test_virtual_stopped_vehicle_value(self):
        # stopped virtual leader at line + gamma: gap g = 200
        gamma, kappa = 4.0, 0.05
        leader = LeaderObservation(200.0 + gamma, 0.0, 0.0, True)
        got = rear_end_upper_bound(0.0, 12.0, leader, gamma, kappa, U_MAX)
        s = math.sqrt(2 * U_MAX * 200.0)
        assert got == pytest.approx(-U_MAX * 12.0 / s + kappa * (s - 12.0))
        assert got == pytest.approx(0.2944271909999, abs=1e-9)

    def test_violated_gap_demands_full_braking(self):
        leader = LeaderObservation(3.9, 0.0, 0.0, True)
        assert rear_end_upper_bound(0.0, 5.0, leader, 4.0, 0.2, U_MAX) == -U_MAX

    def test_gap_floor_keeps_bound_finite(self):
        leader = LeaderObservation(4.0 + 1e-9, 0.0, 0.0, True)
        got = rear_end_upper_bound(0.0, 5.0, leader, 4.0, 0.2, U_MAX)
        assert math.isfinite(got) and got < -U_MAX

    def test_stopping_boundary_commands_full_brake(self):
        # where v - leader_speed = sqrt(2 u_max g) the bound is exactly
        # leader_accel - u_max (for a stopped leader: -u_max)
        gamma = 4.0
        g = 14.4
        v = math.sqrt(2 * U_MAX * g)
        leader = LeaderObservation(g + gamma, 0.0, 0.0, True)
        assert rear_end_upper_bound(0.0, v, leader, gamma, 0.2, U_MAX) == pytest.approx(-U_MAX)


class TestIntersectBounds:
    def test_empty_input_gives_physical_limits(self):
        assert intersect_bounds([], U_MAX) == ControlInterval(-5.0, 5.0)

    def test_plain_intersection(self):
        ivls = [ControlInterval(-1, 4), ControlInterval(0, 2), ControlInterval(-5, 5)]
        assert intersect_bounds(ivls, U_MAX) == ControlInterval(0.0, 2.0)

    def test_infeasible_reports_violating_pair(self):
        got = intersect_bounds([ControlInterval(3, 5), ControlInterval(-5, 1)], U_MAX)
        assert isinstance(got, Infeasible)
        assert (got.max_lo, got.min_hi) == (3.0, 1.0)

    def test_clipping_at_physical_limits(self):
        got = intersect_bounds([ControlInterval(-20, 20)], U_MAX)
        assert got == ControlInterval(-5.0, 5.0)


class TestSolveProblem1:
    def test_interior_optimum(self):
        assert solve_problem1(1.0, ControlInterval(-5, 5)) == 1.0

    def test_clamp_to_upper(self):
        assert solve_problem1(4.0, ControlInterval(-5.0, 1.82)) == 1.82

    def test_clamp_to_brake_limit(self):
        assert solve_problem1(-6.0, ControlInterval(-5, 5)) == -5.0

    def test_rejects_empty_interval(self):
        with pytest.raises(ValueError):
            solve_problem1(0.0, ControlInterval(1.0, -1.0))

    def test_matches_grid_brute_force(self):
        rng = np.random.default_rng(7)
        for _ in range(200):
            lo = rng.uniform(-6, 4)
            hi = lo + rng.uniform(0, 8)
            u_ref = rng.uniform(-10, 10)
            grid = np.arange(lo, hi + 1e-4, 1e-4)
            best = grid[np.argmin((u_ref - grid) ** 2)]
            assert abs(solve_problem1(u_ref, ControlInterval(lo, hi)) - best) <= 1e-4


def euler_step(p, v, t, u, dt):
    return p + v * dt, v + u * dt, t + dt


class TestBarrierConditions:
    """One fine Euler step at the bound must not decay any barrier faster
    than its class-K rate."""

    DT = 1e-5
    TOL = 1e-6

    def test_crossing_lower_holds_barrier_with_equality(self):
        rng = np.random.default_rng(1)
        kT = 0.04
        for _ in range(100):
            dp = rng.uniform(5, 300)
            dt2 = rng.uniform(1.0, 40.0)
            # sample inside the safe set b3 >= 0
            v_min_safe = dp / dt2 - U_MAX * dt2 / 2.0
            v = max(0.0, v_min_safe) + rng.uniform(0, 10)
            u = crossing_lower_bound(dp, dt2, v, kT, U_MAX)

            def b3(p_, v_, t_):
                d = dp - p_
                r = dt2 - t_
                return v_ - d / r + U_MAX * r / 2.0

            b0 = b3(0.0, v, 0.0)
            p1, v1, t1 = euler_step(0.0, v, 0.0, u, self.DT)
            b1 = b3(p1, v1, t1)
            assert b1 - b0 + kT * b0 * self.DT >= -self.TOL

    def test_crossing_upper_holds_barrier(self):
        rng = np.random.default_rng(2)
        kT = 0.04
        for _ in range(100):
            dp = rng.uniform(5, 300)
            dt1 = rng.uniform(0.5, 30.0)
            v_max_safe = dp / dt1 + U_MAX * dt1 / 2.0
            v = rng.uniform(0, v_max_safe)
            u = crossing_upper_bound(dp, dt1, v, kT, U_MAX)

            def b4(p_, v_, t_):
                d = dp - p_
                r = dt1 - t_
                return d / r + U_MAX * r / 2.0 - v_

            b0 = b4(0.0, v, 0.0)
            p1, v1, t1 = euler_step(0.0, v, 0.0, u, self.DT)
            b1 = b4(p1, v1, t1)
            assert b1 - b0 + kT * b0 * self.DT >= -self.TOL

    def test_rear_end_holds_first_order_barrier(self):
        rng = np.random.default_rng(3)
        gamma, kR = 4.0, 0.2
        for _ in range(100):
            g = rng.uniform(0.5, 120.0)
            lead_v = rng.uniform(0, 22)
            lead_a = rng.uniform(-5, 2)
            # sample inside the safe set b >= 0
            v = max(0.0, lead_v + math.sqrt(2 * U_MAX * g) - rng.uniform(0, 20))
            leader = LeaderObservation(g + gamma, lead_v, lead_a, True)
            u = rear_end_upper_bound(0.0, v, leader, gamma, kR, U_MAX)

            def b(p_, v_, dl_, vl_):
                gg = dl_ - p_ - gamma
                return vl_ - v_ + math.sqrt(max(2 * U_MAX * gg, 0.0))

            b0 = b(0.0, v, leader.position, lead_v)
            p1, v1, _ = euler_step(0.0, v, 0.0, u, self.DT)
            dl1 = leader.position + lead_v * self.DT
            vl1 = lead_v + lead_a * self.DT
            b1 = b(p1, v1, dl1, vl1)
            assert b1 - b0 + kR * b0 * self.DT >= -self.TOL

    def test_speed_bounds_hold_exactly(self, limits):
        rng = np.random.default_rng(4)
        ks = 1000.0
        for _ in range(100):
            v = rng.uniform(0, limits.v_max)
            b = speed_bounds(v, limits, ks)
            # upper barrier: v_max - v under u = hi
            v1 = v + b.hi * self.DT
            assert (limits.v_max - v1) - (limits.v_max - v) * (1 - ks * self.DT) >= -self.TOL
            # lower barrier: v - v_min under u = lo
            v2 = v + b.lo * self.DT
            assert (v2 - limits.v_min) - (v - limits.v_min) * (1 - ks * self.DT) >= -self.TOL

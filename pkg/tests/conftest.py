"""Shared helpers: independent fine-step oracles and world builders."""

import numpy as np
import pytest

from cbfsim import (
    Color,
    GainsConfig,
    IdmParams,
    IntersectionTopology,
    LimitsConfig,
    SignalSchedule,
    World,
)


def full_throttle_arrival(v0: float, delta_p: float, u_max: float,
                          dt: float = 1e-4) -> float:
    """Fine-step forward simulation of the double integrator at u = u_max;
    returns the (interpolated) time at which delta_p is covered."""
    p, v, t = 0.0, v0, 0.0
    while p < delta_p:
        v_new = v + u_max * dt
        p_new = p + v * dt + 0.5 * u_max * dt * dt
        if p_new >= delta_p:
            # quadratic interpolation within the step
            a, b, c = 0.5 * u_max, v, p - delta_p
            tau = (-b + np.sqrt(b * b - 4 * a * c)) / (2 * a)
            return t + tau
        p, v, t = p_new, v_new, t + dt
    return t


def throttle_then_cruise_arrival(v0: float, d: float, u_max: float,
                                 v_max: float, dt: float = 1e-4) -> float:
    """Fine-step oracle for the fastest-arrival headway: full throttle capped
    at v_max, then cruise."""
    p, v, t = 0.0, v0, 0.0
    while True:
        v_new = min(v_max, v + u_max * dt)
        p_new = p + 0.5 * (v + v_new) * dt
        if p_new >= d:
            return t + dt * (d - p) / (p_new - p)
        p, v, t = p_new, v_new, t + dt


def quadrature_position(t_end: float, v_des: float, phi: float,
                        n: int = 200_000) -> float:
    """Trapezoid quadrature of the reference-law speed profile from rest."""
    ts = np.linspace(0.0, t_end, n)
    vs = v_des * (1.0 - np.exp(-phi * ts))
    return float(np.trapz(vs, ts))


def alternating_schedules(green: float = 15.0, red: float = 15.0):
    """Default signal program: opposing pairs alternate green."""
    phases = ((Color.GREEN, green), (Color.RED, red))
    return [SignalSchedule(phases, off) for off in (0.0, green, 0.0, green)]


def make_world(**kw) -> World:
    args = dict(
        topology=IntersectionTopology(),
        schedules=alternating_schedules(),
        limits=LimitsConfig(),
        gains=GainsConfig(),
        idm=IdmParams(),
        seed=0,
    )
    args.update(kw)
    return World(**args)


@pytest.fixture
def limits():
    return LimitsConfig()


@pytest.fixture
def gains():
    return GainsConfig()

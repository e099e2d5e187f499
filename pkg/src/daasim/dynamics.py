"""Ownship unicycle integrator and constant-velocity intruder propagation.

Ownship control is u = (dv/dt, dchi/dt) held constant over a step (zero-order
hold); position is integrated with a single RK4 step per call, so callers
should step at the base simulation rate. The down component is fixed per
agent: avoidance happens in the horizontal plane.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from math import cos, sin

from .frames import NedVector, wrap_angle


@dataclass(frozen=True, slots=True)
class ControlInput:
    """Ownship control: longitudinal acceleration [m/s^2] and turn rate [rad/s]."""

    accel: float
    turn_rate: float


@dataclass(frozen=True, slots=True)
class ControlBounds:
    """Componentwise box on the control input."""

    u_min: ControlInput
    u_max: ControlInput

    def __post_init__(self):
        if (self.u_min.accel > self.u_max.accel
                or self.u_min.turn_rate > self.u_max.turn_rate):
            raise ValueError("u_min must be <= u_max componentwise")


# Turn radius ~20 m at 10 m/s; the platform cannot loiter or fly backward.
DEFAULT_BOUNDS = ControlBounds(ControlInput(-2.0, -0.5), ControlInput(2.0, 0.5))


@dataclass(frozen=True, slots=True)
class OwnshipState:
    """Controlled agent: planar kinematic state at a fixed altitude."""

    position: NedVector
    speed: float            # m/s, >= 0
    heading: float          # rad, wrapped to (-pi, pi]

    def velocity_ne(self) -> tuple[float, float]:
        """Horizontal velocity components (north, east) [m/s]."""
        return (self.speed * math.cos(self.heading),
                self.speed * math.sin(self.heading))


@dataclass(frozen=True, slots=True)
class IntruderState:
    """Non-cooperative agent: speed and heading stay constant over an episode."""

    position: NedVector
    speed: float            # m/s, >= 0
    heading: float          # rad, wrapped

    def velocity_ne(self) -> tuple[float, float]:
        return (self.speed * math.cos(self.heading),
                self.speed * math.sin(self.heading))


def clamp_control(u: ControlInput, b: ControlBounds) -> ControlInput:
    """Componentwise clamp of u into the control box."""
    return ControlInput(
        min(max(u.accel, b.u_min.accel), b.u_max.accel),
        min(max(u.turn_rate, b.u_min.turn_rate), b.u_max.turn_rate),
    )


def ownship_step(s: OwnshipState, u: ControlInput, dt: float) -> OwnshipState:
    """One RK4 step of the unicycle dynamics under zero-order-hold control.

    Speed and heading rates are constant over the step, so their updates are
    exact; position error vs the true constant-turn arc is O(dt^5) per step.
    Speed is floored at zero after the step (no reverse flight).
    """
    if dt <= 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    v0, chi0 = s.speed, s.heading
    a, w = u.accel, u.turn_rate
    half = 0.5 * dt

    v1, c1 = v0, chi0
    v2, c2 = v0 + a * half, chi0 + w * half
    v4, c4 = v0 + a * dt, chi0 + w * dt

    k1n, k1e = v1 * cos(c1), v1 * sin(c1)
    k2n, k2e = v2 * cos(c2), v2 * sin(c2)  # stages 2 and 3 coincide
    k4n, k4e = v4 * cos(c4), v4 * sin(c4)

    sixth = dt / 6.0
    p = s.position
    return OwnshipState(
        position=NedVector(p.north + sixth * (k1n + 4.0 * k2n + k4n),
                           p.east + sixth * (k1e + 4.0 * k2e + k4e),
                           p.down),
        speed=max(0.0, v4),
        heading=wrap_angle(c4),
    )


def intruder_step(s: IntruderState, dt: float) -> IntruderState:
    """Constant-velocity propagation; speed and heading are untouched."""
    if dt <= 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    p = s.position
    return IntruderState(
        NedVector(p.north + dt * s.speed * cos(s.heading),
                  p.east + dt * s.speed * sin(s.heading),
                  p.down),
        s.speed, s.heading,
    )

"""Relative kinematics of a vision-based leader-follower pair.

The follower's state relative to its leader is ``(L, alpha, phi)``: the
distance from the follower's camera to the leader, the bearing of the line of
sight measured from the leader's heading, and the bearing of the leader in the
follower's camera frame.  The dynamics are control affine::

    xdot = f(x, u_leader) + g(x) u_follower

All functions here operate on plain floats so they stay cheap inside the
Monte Carlo loop.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple

TWO_PI = 2.0 * math.pi


class DegenerateStateError(ValueError):
    """Raised when the relative state leaves the domain where the model is defined."""


class RelativeState(NamedTuple):
    """Relative state of a follower with respect to its leader."""

    L: float
    alpha: float
    phi: float


# Estimates share the layout of the true state.
StateEstimate = RelativeState


class ControlInput(NamedTuple):
    """Unicycle input: linear velocity (m/s) and angular velocity (rad/s)."""

    v: float
    omega: float


ZERO_INPUT = ControlInput(0.0, 0.0)


@dataclass(frozen=True)
class KinematicsParams:
    """Parameters of the relative kinematics.

    Attributes
    ----------
    d : float
        Camera offset ahead of the follower's wheel axis, metres.
    camera_frame_bearing : bool
        When True the camera bearing ``phi`` also rotates with the follower's
        own yaw rate, i.e. ``phi_dot`` carries an extra ``-omega`` term.  This
        is what a body-fixed camera measures and what a Cartesian two-unicycle
        model produces.  When False the input matrix omits that term.
    L_floor : float
        Distances at or below this value are treated as degenerate.
    """

    d: float = 0.254
    camera_frame_bearing: bool = True
    L_floor: float = 1e-3

    def __post_init__(self):
        if not self.d > 0.0:
            raise ValueError(f"camera offset d must be positive, got {self.d}")
        if not self.L_floor > 0.0:
            raise ValueError(f"L_floor must be positive, got {self.L_floor}")


def wrap_angle(a: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    w = math.remainder(a, TWO_PI)
    if w <= -math.pi:
        w += TWO_PI
    return w


def check_state(x: RelativeState, p: KinematicsParams) -> None:
    if not (math.isfinite(x[0]) and math.isfinite(x[1]) and math.isfinite(x[2])):
        raise DegenerateStateError(f"non-finite relative state {tuple(x)}")
    if x[0] <= p.L_floor:
        raise DegenerateStateError(f"distance L={x[0]:.3g} at or below floor {p.L_floor}")


def drift(x: RelativeState, u_leader: ControlInput) -> tuple[float, float, float]:
    """Leader-induced drift ``f(x, u_leader)``."""
    L, alpha, _ = x
    v_l, w_l = u_leader
    sa = math.sin(alpha)
    return (math.cos(alpha) * v_l, -sa / L * v_l + w_l, sa / L * v_l)


def input_matrix(x: RelativeState, p: KinematicsParams) -> tuple[tuple[float, float], ...]:
    """Follower input matrix ``g(x)`` as three (v, omega) rows."""
    L, _, phi = x
    d = p.d
    sp, cp = math.sin(phi), math.cos(phi)
    phi_row_w = -d * cp / L
    if p.camera_frame_bearing:
        phi_row_w -= 1.0
    return (
        (-cp, -d * sp),
        (-sp / L, d * cp / L),
        (sp / L, phi_row_w),
    )


def state_derivative(
    x: RelativeState,
    u_follower: ControlInput,
    u_leader: ControlInput,
    p: KinematicsParams,
) -> tuple[float, float, float]:
    """Return ``(dL/dt, dalpha/dt, dphi/dt)``.

    Raises
    ------
    DegenerateStateError
        If the state is degenerate or the derivative is not finite.
    """
    check_state(x, p)
    f = drift(x, u_leader)
    g = input_matrix(x, p)
    v, w = u_follower
    out = (
        f[0] + g[0][0] * v + g[0][1] * w,
        f[1] + g[1][0] * v + g[1][1] * w,
        f[2] + g[2][0] * v + g[2][1] * w,
    )
    if not all(math.isfinite(c) for c in out):
        raise DegenerateStateError(f"non-finite derivative at {tuple(x)}")
    return out


def rk4_step(
    deriv: Callable[[RelativeState], tuple[float, float, float]],
    x: RelativeState,
    dt: float,
) -> RelativeState:
    """One classical Runge-Kutta step of ``deriv`` without angle wrapping."""
    L, a, ph = x
    k1 = deriv(x)
    h = 0.5 * dt
    k2 = deriv(RelativeState(L + h * k1[0], a + h * k1[1], ph + h * k1[2]))
    k3 = deriv(RelativeState(L + h * k2[0], a + h * k2[1], ph + h * k2[2]))
    k4 = deriv(RelativeState(L + dt * k3[0], a + dt * k3[1], ph + dt * k3[2]))
    s = dt / 6.0
    return RelativeState(
        L + s * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
        a + s * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
        ph + s * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2]),
    )


def integrate_step(
    x: RelativeState,
    u_follower: ControlInput,
    u_leader: ControlInput,
    p: KinematicsParams,
    dt: float,
) -> RelativeState:
    """Advance the relative state by ``dt`` with both inputs held constant.

    Angles are wrapped to (-pi, pi] after the step, never inside the stages.
    Every stage evaluation checks the distance floor, so a trajectory that
    collapses onto the leader raises :class:`DegenerateStateError`.
    """
    if not dt > 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    x_next = rk4_step(lambda s: state_derivative(s, u_follower, u_leader, p), x, dt)
    check_state(x_next, p)
    return RelativeState(x_next[0], wrap_angle(x_next[1]), wrap_angle(x_next[2]))


def integrate_feedback_step(
    x: RelativeState,
    policy: Callable[[RelativeState], ControlInput],
    u_leader: ControlInput,
    p: KinematicsParams,
    dt: float,
) -> RelativeState:
    """RK4 step where the follower input is re-evaluated at every stage.

    This integrates the continuous-time closed loop ``xdot = f + g policy(x)``
    rather than the sampled-data loop of :func:`integrate_step`.
    """
    if not dt > 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    x_next = rk4_step(lambda s: state_derivative(s, policy(s), u_leader, p), x, dt)
    check_state(x_next, p)
    return RelativeState(x_next[0], wrap_angle(x_next[1]), wrap_angle(x_next[2]))

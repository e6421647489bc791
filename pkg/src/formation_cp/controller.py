"""Feedback-linearising formation tracking law on the tracking state (L, alpha)."""

from __future__ import annotations

from dataclasses import dataclass

from .dynamics import (
    ControlInput,
    DegenerateStateError,
    KinematicsParams,
    RelativeState,
    drift,
    input_matrix,
    wrap_angle,
)


@dataclass(frozen=True)
class ControllerGains:
    k_L: float = 3.0
    k_alpha: float = 1.85
    L_d: float = 1.2
    alpha_d: float = 0.0

    def __post_init__(self):
        if not (self.k_L > 0 and self.k_alpha > 0):
            raise ValueError(f"gains must be positive, got {self.k_L}, {self.k_alpha}")


def nominal_control(
    x_hat: RelativeState,
    u_leader: ControlInput,
    gains: ControllerGains,
    p_kin: KinematicsParams,
) -> ControlInput:
    """Input that makes ``(L, alpha)`` converge exponentially to the setpoint.

    Solves ``g_z u = K (z_d - z) - f_z`` where ``g_z`` and ``f_z`` are the
    ``(L, alpha)`` rows of the relative kinematics.  ``det g_z = -d / L``, so
    the inverse exists whenever ``L > 0`` and ``d > 0``.  The bearing ``phi``
    is left to the safety filter.  No input saturation is applied here.
    """
    L = x_hat[0]
    if not L > p_kin.L_floor:
        raise DegenerateStateError(f"estimated distance {L!r} at or below floor")
    f = drift(x_hat, u_leader)
    g = input_matrix(x_hat, p_kin)
    a, b = g[0]
    c, d = g[1]
    det = a * d - b * c
    if abs(det) < 1e-9:
        raise DegenerateStateError(f"tracking input matrix is singular (det={det:.3g})")
    r0 = gains.k_L * (gains.L_d - L) - f[0]
    r1 = gains.k_alpha * wrap_angle(gains.alpha_d - x_hat[1]) - f[1]
    return ControlInput((d * r0 - b * r1) / det, (a * r1 - c * r0) / det)

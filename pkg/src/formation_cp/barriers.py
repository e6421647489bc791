"""Field-of-view safe set, its barrier functions and their Lie derivatives.

The safe set keeps the leader within range and inside the camera's horizontal
field of view::

    h1 = L - d_min      h2 = d_max - L
    h3 = phi + psi_max  h4 = psi_max - phi

Each barrier is linear in a single coordinate, which makes the Lipschitz
constants and gradients trivial.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

from .dynamics import (
    ControlInput,
    DegenerateStateError,
    KinematicsParams,
    RelativeState,
    drift,
    input_matrix,
)

# (coordinate index, sign) of each barrier's gradient
_GRADIENTS = ((0, 1.0), (0, -1.0), (2, 1.0), (2, -1.0))


@dataclass(frozen=True)
class SafeSetParams:
    d_min: float = 0.3
    d_max: float = 3.0
    psi_max: float = 0.76
    gamma: tuple[float, float, float, float] = (3.0, 3.0, 3.0, 3.0)

    def __post_init__(self):
        if not 0.0 < self.d_min < self.d_max:
            raise ValueError(f"need 0 < d_min < d_max, got {self.d_min}, {self.d_max}")
        if not self.psi_max > 0.0:
            raise ValueError("psi_max must be positive")
        if len(self.gamma) != 4 or any(not g > 0.0 for g in self.gamma):
            raise ValueError(f"gamma must hold four positive gains, got {self.gamma}")
        object.__setattr__(self, "gamma", tuple(float(g) for g in self.gamma))


class BarrierValues(NamedTuple):
    h: tuple[float, float, float, float]
    h_min: float


def barrier_values(x: RelativeState, p: SafeSetParams) -> BarrierValues:
    L, phi = x[0], x[2]
    h = (L - p.d_min, p.d_max - L, phi + p.psi_max, p.psi_max - phi)
    return BarrierValues(h, min(h))


def risk_indicator(x: RelativeState, p: SafeSetParams) -> float:
    """``min_l h_l(x)``; smaller means closer to losing the leader."""
    L, phi = x[0], x[2]
    return min(L - p.d_min, p.d_max - L, p.psi_max - abs(phi))


def in_safe_set(x: RelativeState, p: SafeSetParams) -> bool:
    return risk_indicator(x, p) >= 0.0


def weighted_norm(e: Sequence[float], weights: Sequence[float]) -> float:
    """``sqrt(sum_k w_k e_k^2)`` over (L, alpha, phi) components."""
    return math.sqrt(sum(w * c * c for w, c in zip(weights, e)))


def lipschitz_constants(
    p: SafeSetParams, norm_weights: Sequence[float] = (1.0, 1.0, 1.0)
) -> tuple[float, float, float, float]:
    """Lipschitz constant of each barrier under the weighted Euclidean norm.

    A unit-coefficient linear function of coordinate k satisfies
    ``|h(x) - h(y)| = |x_k - y_k| <= ||x - y||_w / sqrt(w_k)`` with equality
    along that axis, so the constant is ``1 / sqrt(w_k)``.
    """
    if len(norm_weights) != 3 or any(not w > 0.0 for w in norm_weights):
        raise ValueError(f"norm weights must be three positive numbers, got {norm_weights}")
    return tuple(1.0 / math.sqrt(norm_weights[k]) for k, _ in _GRADIENTS)


def tightened_barriers(
    x_hat: RelativeState,
    margin: float,
    p: SafeSetParams,
    L_h: Sequence[float],
) -> tuple[float, float, float, float]:
    """``h_l(x_hat) - L_h[l] * margin``; a lower bound on ``h_l(x)`` when
    ``||x - x_hat||_w <= margin``."""
    if margin < 0.0:
        raise ValueError(f"margin must be non-negative, got {margin}")
    h = barrier_values(x_hat, p).h
    return tuple(hl - c * margin for hl, c in zip(h, L_h))


def lie_derivatives(
    x_hat: RelativeState,
    u_leader: ControlInput,
    p_kin: KinematicsParams,
) -> list[tuple[float, tuple[float, float]]]:
    """Drift term and input row of every barrier along the relative kinematics.

    Returns a list of ``(Lf_h, (Lg_h_v, Lg_h_omega))``, one entry per barrier.
    The margin is held fixed over a control step, so the tightened barriers
    share these derivatives.
    """
    if not (x_hat[0] > p_kin.L_floor and math.isfinite(x_hat[0])):
        raise DegenerateStateError(f"estimated distance {x_hat[0]!r} at or below floor")
    f = drift(x_hat, u_leader)
    g = input_matrix(x_hat, p_kin)
    out = []
    for k, s in _GRADIENTS:
        out.append((s * f[k], (s * g[k][0], s * g[k][1])))
    return out

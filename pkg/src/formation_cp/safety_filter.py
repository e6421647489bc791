"""Risk-aware conformal CBF-QP safety filter.

Per control step: nominal tracking input from the estimate, risk group of the
estimate, smoothed conformal margin, tightened barrier rows, projection QP.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

from .barriers import SafeSetParams, barrier_values, lie_derivatives, lipschitz_constants
from .conformal import QuantileTable, assign_group, smooth_margin
from .controller import ControllerGains, nominal_control
from .dynamics import ZERO_INPUT, ControlInput, KinematicsParams, RelativeState
from .qp import INFEASIBLE, InputBox, QpProblem, QpSolution, solve


@dataclass(frozen=True)
class FilterParams:
    kinematics: KinematicsParams = KinematicsParams()
    safe_set: SafeSetParams = SafeSetParams()
    gains: ControllerGains = ControllerGains()
    box: InputBox = InputBox()
    norm_weights: tuple[float, float, float] = (1.0, 1.0, 1.0)
    tighten: bool = True
    L_h: tuple[float, ...] = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "L_h", lipschitz_constants(self.safe_set, self.norm_weights))


def assemble(
    x_hat: RelativeState,
    u_nom: ControlInput,
    u_leader: ControlInput,
    margin: float,
    safe: SafeSetParams,
    kin: KinematicsParams,
    L_h: Sequence[float],
    box: InputBox = InputBox(),
) -> QpProblem:
    """Build the CBF rows ``Lg_h . u >= -Lf_h - gamma * (h - L_h * margin)``.

    An infinite margin yields ``+inf`` right-hand sides, i.e. an empty set.
    """
    if margin < 0.0:
        raise ValueError(f"margin must be non-negative, got {margin}")
    h = barrier_values(x_hat, safe).h
    lie = lie_derivatives(x_hat, u_leader, kin)
    rows = []
    for l in range(4):
        lf, (gv, gw) = lie[l]
        ht = h[l] - L_h[l] * margin if math.isfinite(margin) else -math.inf
        rows.append((gv, gw, -lf - safe.gamma[l] * ht))
    return QpProblem((float(u_nom[0]), float(u_nom[1])), tuple(rows), box)


@dataclass(frozen=True)
class StepDiagnostics:
    u_nom: ControlInput
    risk: float
    group: int
    margin: float
    status: str
    active_set: tuple[int, ...]
    slacks: tuple[float, ...]


def safe_step(
    x_hat: RelativeState,
    u_leader: ControlInput,
    table: QuantileTable,
    params: FilterParams = FilterParams(),
) -> tuple[ControlInput, StepDiagnostics]:
    """One pass of the filter on a state estimate.

    The group is reported under ``table``'s taxonomy.  With
    ``params.tighten=False`` the margin is forced to zero.  When the QP is
    infeasible the follower is commanded to stop for this step and the
    diagnostics carry the ``infeasible`` status.
    """
    u_nom = nominal_control(x_hat, u_leader, params.gains, params.kinematics)
    risk = barrier_values(x_hat, params.safe_set).h_min
    group = assign_group(risk, table.taxonomy)
    margin = smooth_margin(risk, table) if params.tighten else 0.0
    problem = assemble(
        x_hat, u_nom, u_leader, margin, params.safe_set, params.kinematics, params.L_h, params.box
    )
    sol: QpSolution = solve(problem)
    if sol.status == INFEASIBLE:
        return ZERO_INPUT, StepDiagnostics(u_nom, risk, group, margin, INFEASIBLE, (), ())
    slacks = tuple(problem.slacks(sol.u)[:4])
    return sol.u, StepDiagnostics(u_nom, risk, group, margin, sol.status, sol.active_set, slacks)

"""Exact solver for the two-input projection QP of the safety filter.

    minimise   0.5 * ||u - u_nom||^2
    subject to a_i . u >= b_i

With two decision variables the optimum has at most two active constraints,
so every active set of size 0, 1 or 2 is tried and the KKT-valid candidate
with the smallest objective is returned.  When no candidate exists the
verdict is confirmed with a phase-1 linear program.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import linprog

from .dynamics import ControlInput

FEAS_TOL = 1e-9
DUAL_TOL = 1e-9

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"

Row = tuple[float, float, float]


@dataclass(frozen=True)
class InputBox:
    v_min: float = -1.0
    v_max: float = 1.0
    omega_min: float = -2.0
    omega_max: float = 2.0

    def __post_init__(self):
        if not (self.v_min <= self.v_max and self.omega_min <= self.omega_max):
            raise ValueError(f"empty input box {self}")

    def rows(self) -> tuple[Row, ...]:
        return (
            (1.0, 0.0, self.v_min),
            (-1.0, 0.0, -self.v_max),
            (0.0, 1.0, self.omega_min),
            (0.0, -1.0, -self.omega_max),
        )

    def contains(self, u, tol: float = FEAS_TOL) -> bool:
        return (
            self.v_min - tol <= u[0] <= self.v_max + tol
            and self.omega_min - tol <= u[1] <= self.omega_max + tol
        )


@dataclass(frozen=True)
class QpProblem:
    """Projection of ``u_nom`` onto ``{u : a.u >= b for every row} & box``.

    ``rows`` holds ``(a_v, a_omega, b)`` triples; the box contributes four more
    rows after them.
    """

    u_nom: tuple[float, float]
    rows: tuple[Row, ...]
    box: InputBox = InputBox()

    def all_rows(self) -> tuple[Row, ...]:
        return tuple(self.rows) + self.box.rows()

    def slacks(self, u) -> np.ndarray:
        return np.array([a0 * u[0] + a1 * u[1] - b for a0, a1, b in self.all_rows()])


@dataclass(frozen=True)
class QpSolution:
    status: str
    u: ControlInput | None
    active_set: tuple[int, ...] = ()
    multipliers: tuple[float, ...] = ()
    kkt_residual: float = math.nan
    objective: float = math.nan

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL


def kkt_residual(u, u_nom, rows: Sequence[Row], active: Sequence[int], lam: Sequence[float]) -> float:
    """Largest of the stationarity, primal, dual and complementarity residuals."""
    g0, g1 = u[0] - u_nom[0], u[1] - u_nom[1]
    worst_primal = 0.0
    for a0, a1, b in rows:
        worst_primal = max(worst_primal, b - (a0 * u[0] + a1 * u[1]))
    comp = 0.0
    dual = 0.0
    for i, l in zip(active, lam):
        a0, a1, b = rows[i]
        g0 -= l * a0
        g1 -= l * a1
        comp = max(comp, abs(l * (a0 * u[0] + a1 * u[1] - b)))
        dual = max(dual, -l)
    return max(math.hypot(g0, g1), worst_primal, comp, dual)


def _feasible(u0: float, u1: float, rows: Sequence[Row], tol: float) -> bool:
    for a0, a1, b in rows:
        if a0 * u0 + a1 * u1 < b - tol * (1.0 + abs(b)):
            return False
    return True


def _enumerate(un0: float, un1: float, rows: Sequence[Row], tol: float):
    """Best KKT candidate over active sets of size one and two, or None."""
    best = None
    best_obj = math.inf
    n = len(rows)
    for i in range(n):
        a0, a1, b = rows[i]
        na2 = a0 * a0 + a1 * a1
        if na2 < 1e-24:
            continue
        lam = (b - (a0 * un0 + a1 * un1)) / na2
        if lam < -DUAL_TOL:
            continue
        u0, u1 = un0 + lam * a0, un1 + lam * a1
        obj = 0.5 * lam * lam * na2
        if obj < best_obj and _feasible(u0, u1, rows, tol):
            best, best_obj = ((u0, u1), (i,), (lam,)), obj
    for i in range(n):
        ai0, ai1, bi = rows[i]
        for j in range(i + 1, n):
            aj0, aj1, bj = rows[j]
            det = ai0 * aj1 - ai1 * aj0
            scale = math.hypot(ai0, ai1) * math.hypot(aj0, aj1)
            if abs(det) <= 1e-12 * scale:
                continue  # parallel rows
            u0 = (bi * aj1 - ai1 * bj) / det
            u1 = (ai0 * bj - bi * aj0) / det
            w0, w1 = u0 - un0, u1 - un1
            li = (w0 * aj1 - aj0 * w1) / det
            lj = (ai0 * w1 - w0 * ai1) / det
            if li < -DUAL_TOL or lj < -DUAL_TOL:
                continue
            obj = 0.5 * (w0 * w0 + w1 * w1)
            if obj < best_obj and _feasible(u0, u1, rows, tol):
                best, best_obj = ((u0, u1), (i, j), (li, lj)), obj
    return best


def phase1_violation(rows: Sequence[Row]) -> float:
    """Smallest uniform slack ``s >= 0`` making ``a.u + s >= b`` feasible.

    Zero (to solver tolerance) means the constraint set is non-empty.
    """
    A = np.array([[-a0, -a1, -1.0] for a0, a1, _ in rows])
    b = np.array([-bb for _, _, bb in rows])
    res = linprog(
        c=[0.0, 0.0, 1.0],
        A_ub=A,
        b_ub=b,
        bounds=[(None, None), (None, None), (0.0, None)],
        method="highs",
    )
    if res.status != 0:
        raise RuntimeError(f"phase-1 LP failed: {res.message}")
    return float(res.x[2])


def is_feasible_lp(rows: Sequence[Row], tol: float = 1e-8) -> bool:
    scale = 1.0 + max(abs(b) for *_, b in rows)
    return phase1_violation(rows) <= tol * scale


def solve(problem: QpProblem) -> QpSolution:
    """Solve the projection QP exactly.

    Returns an ``infeasible`` solution when the constraint set is empty,
    including when any right-hand side is ``+inf`` (an infinite margin).
    """
    rows = problem.all_rows()
    un0, un1 = float(problem.u_nom[0]), float(problem.u_nom[1])
    for a0, a1, b in rows:
        if b == math.inf:
            return QpSolution(INFEASIBLE, None)
        if not (math.isfinite(a0) and math.isfinite(a1) and math.isfinite(b)):
            raise ValueError(f"non-finite constraint row {(a0, a1, b)}")
    if not (math.isfinite(un0) and math.isfinite(un1)):
        raise ValueError(f"non-finite nominal input {problem.u_nom}")

    if _feasible(un0, un1, rows, FEAS_TOL):
        return QpSolution(OPTIMAL, ControlInput(un0, un1), (), (), 0.0, 0.0)

    best = _enumerate(un0, un1, rows, FEAS_TOL)
    if best is None:
        if not is_feasible_lp(rows):
            return QpSolution(INFEASIBLE, None)
        # non-empty but razor thin: retry with a looser feasibility tolerance
        best = _enumerate(un0, un1, rows, 1e-6)
        if best is None:
            raise RuntimeError("active-set enumeration and phase-1 LP disagree")
    (u0, u1), active, lam = best
    res = kkt_residual((u0, u1), (un0, un1), rows, active, lam)
    obj = 0.5 * ((u0 - un0) ** 2 + (u1 - un1) ** 2)
    return QpSolution(OPTIMAL, ControlInput(u0, u1), active, lam, res, obj)

"""Slow reference implementations used to cross-check the fast code paths.

* :func:`grid_qp` solves the projection QP by brute force over a grid.
* :func:`lp_feasible` decides feasibility with an interior-point LP.
* :func:`reference_quantile` computes the conformal rank in exact rationals.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np
from scipy.optimize import linprog

from . import qp
from .conformal import conformal_quantile


def grid_qp(problem: qp.QpProblem, n: int = 400):
    """Best strictly feasible point of an ``n x n`` grid over the box.

    Returns
    -------
    (u, objective, cell) or None when no grid point is feasible.
    """
    box = problem.box
    v = np.linspace(box.v_min, box.v_max, n)
    w = np.linspace(box.omega_min, box.omega_max, n)
    V, W = np.meshgrid(v, w, indexing="ij")
    ok = np.ones_like(V, dtype=bool)
    for a0, a1, b in problem.rows:
        ok &= a0 * V + a1 * W >= b
    if not ok.any():
        return None
    obj = 0.5 * ((V - problem.u_nom[0]) ** 2 + (W - problem.u_nom[1]) ** 2)
    obj = np.where(ok, obj, np.inf)
    i = np.unravel_index(np.argmin(obj), obj.shape)
    cell = max(v[1] - v[0], w[1] - w[0]) if n > 1 else 0.0
    return (float(V[i]), float(W[i])), float(obj[i]), float(cell)


def displacement_equivalent(grad_norm: float, gap: float) -> float:
    """Step ``s`` with ``grad_norm * s + s^2 / 2 == gap``.

    The projection objective rises by about that much when the optimum moves a
    distance ``s`` away from the nominal input, so an objective gap converts to
    a distance in input space.  A grid argmin itself is only resolved to
    ``O(sqrt(grad_norm * cell))`` along an active constraint, which is why
    objectives rather than argmins are compared.
    """
    return -grad_norm + math.sqrt(grad_norm * grad_norm + 2.0 * max(gap, 0.0))


def lp_feasible(rows: Sequence[qp.Row], tol: float = 1e-9) -> bool:
    """Feasibility of ``a.u >= b`` via a zero-objective interior-point LP."""
    A = np.array([[-a0, -a1] for a0, a1, _ in rows])
    b = np.array([-bb + tol * (1.0 + abs(bb)) for *_, bb in rows])
    res = linprog(c=[0.0, 0.0], A_ub=A, b_ub=b, bounds=[(None, None)] * 2, method="highs-ipm")
    if res.status == 2:
        return False
    if res.status != 0:
        raise RuntimeError(f"oracle LP failed: {res.message}")
    return True


def random_qp(rng: np.random.Generator, width: float = 0.15) -> qp.QpProblem:
    """Random instance: square box of side ``width`` and one to four rows.

    Row offsets are drawn around the box so that roughly a third of the
    instances are infeasible.
    """
    c = rng.uniform(-1.0, 1.0, size=2)
    box = qp.InputBox(c[0] - width / 2, c[0] + width / 2, c[1] - width / 2, c[1] + width / 2)
    u_nom = c + rng.uniform(-width, width, size=2)
    rows = []
    for _ in range(int(rng.integers(1, 5))):
        a = rng.normal(size=2)
        a /= np.linalg.norm(a)
        p = c + rng.uniform(-0.6 * width, 0.6 * width, size=2)
        rows.append((float(a[0]), float(a[1]), float(a @ p + rng.uniform(0.0, 0.1))))
    return qp.QpProblem(tuple(u_nom), tuple(rows), box)


@dataclass
class QpOracleReport:
    n: int
    n_feasible: int
    beaten: int  # feasible grid points strictly better than the solver
    max_resolution_gap: float  # displacement equivalent of grid minus solver objective
    max_kkt: float
    max_violation: float
    verdict_mismatches: int
    grid_mismatches: int
    seconds: float

    def passed(self, u_tol: float = 1e-3, kkt_tol: float = 1e-8) -> bool:
        return (
            self.verdict_mismatches == 0
            and self.grid_mismatches == 0
            and self.beaten == 0
            and self.max_resolution_gap <= u_tol
            and self.max_kkt < kkt_tol
            and self.max_violation <= 1e-9
        )


def run_qp_oracle(n: int = 1000, seed: int = 0, grid: int = 400, width: float = 0.15) -> QpOracleReport:
    """Compare :func:`qp.solve` with the grid and LP oracles on random instances.

    For feasible instances the solver must be feasible, never be beaten by a
    feasible grid point, and sit within ``max_resolution_gap`` (in input units)
    of the grid optimum.
    """
    rng = np.random.default_rng(seed)
    t0 = time.perf_counter()
    feas = verdict_bad = grid_bad = beaten = 0
    max_gap = max_kkt = max_viol = 0.0
    for _ in range(n):
        prob = random_qp(rng, width)
        sol = qp.solve(prob)
        lp_ok = lp_feasible(prob.all_rows())
        if sol.optimal != lp_ok:
            verdict_bad += 1
            continue
        if not sol.optimal:
            continue
        feas += 1
        max_kkt = max(max_kkt, sol.kkt_residual)
        max_viol = max(max_viol, -float(np.min(prob.slacks(sol.u))))
        g = grid_qp(prob, grid)
        if g is None:
            grid_bad += 1
            continue
        _, obj_g, _ = g
        if obj_g < sol.objective - 1e-12:
            beaten += 1
        grad = math.dist(sol.u, prob.u_nom)
        max_gap = max(max_gap, displacement_equivalent(grad, obj_g - sol.objective))
    return QpOracleReport(
        n, feas, beaten, max_gap, max_kkt, max_viol, verdict_bad, grid_bad, time.perf_counter() - t0
    )


def reference_quantile(scores: Sequence[float], delta) -> float:
    """Sort-and-index conformal quantile with the rank in exact arithmetic.

    ``delta`` is read through its decimal string, so ``0.1`` means one tenth.
    """
    s = sorted(float(x) for x in scores)
    n = len(s)
    d = Fraction(str(delta))
    k = math.ceil((n + 1) * (1 - d))
    if k > n:
        return math.inf
    return s[max(k, 1) - 1]


@dataclass
class QuantileOracleReport:
    n: int
    n_sentinel: int
    mismatches: int
    seconds: float


def run_quantile_oracle(n: int = 10_000, seed: int = 0) -> QuantileOracleReport:
    """Compare :func:`conformal.conformal_quantile` with :func:`reference_quantile`.

    Sizes and levels are drawn so that exact-integer ranks and ``k > n``
    cases both occur often; about half of the multisets contain ties.
    """
    rng = np.random.default_rng(seed)
    t0 = time.perf_counter()
    bad = sentinel = 0
    for _ in range(n):
        size = int(rng.integers(1, 60))
        if rng.random() < 0.5:
            scores = rng.integers(0, 10, size=size).astype(float)
        else:
            scores = rng.exponential(size=size)
        if rng.random() < 0.3:
            # sizes and levels that make (n + 1)(1 - delta) an exact integer
            size = int(rng.choice([19, 39, 99, 199])) - int(rng.integers(0, 3))
            scores = rng.exponential(size=size)
            delta = float(rng.choice([0.01, 0.05, 0.1, 0.25, 0.45, 0.5]))
        else:
            delta = round(float(rng.uniform(0.001, 0.999)), 3)
        ref = reference_quantile(scores, delta)
        got = conformal_quantile(scores, delta)
        sentinel += math.isinf(ref)
        bad += not (got == ref)
    return QuantileOracleReport(n, sentinel, bad, time.perf_counter() - t0)

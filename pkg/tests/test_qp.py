import math

import numpy as np
import pytest

from formation_cp.oracles import grid_qp, lp_feasible, random_qp, run_qp_oracle
from formation_cp.qp import (
    INFEASIBLE,
    InputBox,
    QpProblem,
    is_feasible_lp,
    kkt_residual,
    phase1_violation,
    solve,
)

BIG = InputBox(-10, 10, -10, 10)


def test_feasible_nominal_is_returned_unchanged():
    sol = solve(QpProblem((0.2, 0.1), ((1.0, 0.0, -1.0),), BIG))
    assert sol.optimal and sol.u == (0.2, 0.1) and sol.active_set == ()


def test_single_row_is_a_half_plane_projection():
    rng = np.random.default_rng(0)
    for _ in range(200):
        a = rng.normal(size=2)
        u_nom = rng.normal(size=2)
        b = float(a @ u_nom) + rng.uniform(0.01, 1.0)
        sol = solve(QpProblem(tuple(u_nom), ((a[0], a[1], b),), BIG))
        expected = u_nom + a * (b - a @ u_nom) / (a @ a)
        np.testing.assert_allclose(sol.u, expected, atol=1e-12)
        g = grid_qp(QpProblem(tuple(u_nom), ((a[0], a[1], b),), InputBox(*np.repeat(expected, 2) + [-0.1, 0.1, -0.1, 0.1])))
        assert math.dist(g[0], expected) < 0.05


def test_contradictory_rows_are_infeasible():
    sol = solve(QpProblem((0.0, 0.0), ((1.0, 0.0, 1.0), (-1.0, 0.0, 0.0)), BIG))
    assert sol.status == INFEASIBLE and sol.u is None


def test_infinite_right_hand_side_is_infeasible():
    assert solve(QpProblem((0.0, 0.0), ((0.0, 1.0, math.inf),), BIG)).status == INFEASIBLE


def test_box_clips_nominal():
    sol = solve(QpProblem((5.0, -5.0), (), InputBox()))
    assert sol.u == pytest.approx((1.0, -2.0))


def test_kkt_conditions_at_solution():
    rng = np.random.default_rng(1)
    for _ in range(300):
        prob = random_qp(rng)
        sol = solve(prob)
        if sol.optimal:
            assert sol.kkt_residual < 1e-8
            assert kkt_residual(sol.u, prob.u_nom, prob.all_rows(), sol.active_set, sol.multipliers) < 1e-8
            assert prob.slacks(sol.u).min() >= -1e-9


def test_phase1_agrees_with_lp_oracle():
    rng = np.random.default_rng(2)
    for _ in range(300):
        rows = random_qp(rng).all_rows()
        assert is_feasible_lp(rows) == lp_feasible(rows)
    assert phase1_violation(((1.0, 0.0, 1.0), (-1.0, 0.0, 0.0))) == pytest.approx(0.5)


def test_non_finite_rows_are_rejected():
    with pytest.raises(ValueError):
        solve(QpProblem((0.0, 0.0), ((math.nan, 1.0, 0.0),), BIG))


def test_oracle_small_batch():
    rep = run_qp_oracle(n=100, seed=9)
    assert rep.passed(), rep
    assert 0 < rep.n_feasible < rep.n

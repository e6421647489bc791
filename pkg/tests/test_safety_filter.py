import math

import numpy as np
import pytest

from formation_cp.conformal import QuantileTable, RiskTaxonomy, constant_table
from formation_cp.dynamics import ControlInput, KinematicsParams, RelativeState
from formation_cp.qp import INFEASIBLE, InputBox
from formation_cp.safety_filter import FilterParams, assemble, safe_step
from formation_cp.barriers import SafeSetParams

PARAMS = FilterParams()
U_L = ControlInput(0.3, 0.0)


def test_interior_state_leaves_nominal_untouched():
    x = RelativeState(1.3, 0.05, 0.0)
    u, diag = safe_step(x, U_L, constant_table(0.05), PARAMS)
    assert u == diag.u_nom
    assert diag.active_set == ()
    assert diag.group == 1  # single-group table


def test_zero_margin_rows_hold_at_nominal_inside():
    x = RelativeState(1.2, 0.0, 0.0)
    prob = assemble(x, ControlInput(0.3, 0.0), U_L, 0.0, PARAMS.safe_set, PARAMS.kinematics, PARAMS.L_h)
    assert prob.slacks(prob.u_nom)[:4].min() > 0


def test_near_bearing_edge_turns_towards_leader():
    # leader at the +phi edge: phi grows unless the follower yaws left
    x = RelativeState(1.2, 0.0, 0.7)
    u, diag = safe_step(x, U_L, constant_table(0.5), PARAMS)
    assert math.dist(u, diag.u_nom) > 0
    assert u.omega > diag.u_nom.omega
    assert min(diag.slacks) >= -1e-8
    assert 3 in diag.active_set


def test_single_active_bearing_row_closed_form():
    x = RelativeState(1.2, 0.0, 0.7)
    margin = 0.2
    safe = PARAMS.safe_set
    prob = assemble(x, ControlInput(0.0, 0.0), U_L, margin, safe, PARAMS.kinematics, PARAMS.L_h, InputBox(-9, 9, -9, 9))
    a0, a1, b = prob.rows[3]
    u, _ = safe_step(x, U_L, constant_table(margin), FilterParams(box=InputBox(-9, 9, -9, 9)))
    # projection of u_nom onto a.u >= b, assuming only row 4 binds
    un = np.array(safe_step(x, U_L, constant_table(0.0), FilterParams(tighten=False, box=InputBox(-9, 9, -9, 9)))[1].u_nom)
    a = np.array([a0, a1])
    expected = un + a * max(0.0, b - a @ un) / (a @ a)
    np.testing.assert_allclose(u, expected, atol=1e-12)


def test_infinite_margin_is_infeasible_and_stops():
    tab = QuantileTable((math.inf, 0.2, 0.05), RiskTaxonomy())
    u, diag = safe_step(RelativeState(1.2, 0.0, 0.7), U_L, tab, PARAMS)
    assert diag.status == INFEASIBLE
    assert u == (0.0, 0.0)


def test_untightened_filter_ignores_table():
    tab = QuantileTable((0.5, 0.3, 0.2), RiskTaxonomy())
    _, diag = safe_step(RelativeState(1.2, 0.0, 0.7), U_L, tab, FilterParams(tighten=False))
    assert diag.margin == 0.0


def test_group_follows_estimate_risk():
    tab = QuantileTable((0.3, 0.2, 0.05), RiskTaxonomy())
    for phi, g in ((0.7, 1), (0.5, 2), (0.0, 3)):
        _, diag = safe_step(RelativeState(1.2, 0.0, phi), U_L, tab, PARAMS)
        assert diag.group == g


def test_negative_margin_rejected():
    with pytest.raises(ValueError):
        assemble(RelativeState(1, 0, 0), U_L, U_L, -0.1, SafeSetParams(), KinematicsParams(), (1, 1, 1, 1))


def test_same_inputs_same_output():
    tab = QuantileTable((0.3, 0.2, 0.05), RiskTaxonomy())
    a = safe_step(RelativeState(1.1, 0.2, 0.6), ControlInput(0.3, 0.2), tab, PARAMS)
    b = safe_step(RelativeState(1.1, 0.2, 0.6), ControlInput(0.3, 0.2), tab, PARAMS)
    assert a == b

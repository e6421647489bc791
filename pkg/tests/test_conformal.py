import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from formation_cp.conformal import (
    CalibrationError,
    CalibrationWarning,
    QuantileTable,
    RiskTaxonomy,
    TrajectoryRecord,
    assign_group,
    calibrate,
    calibrate_global,
    conformal_quantile,
    constant_table,
    group_maxima,
    smooth_margin,
    smooth_margin_lipschitz,
    trajectory_scores,
)
from formation_cp.oracles import reference_quantile

TAX = RiskTaxonomy()


def make_record(risk, err_phi):
    n = len(risk)
    x_true = np.zeros((n, 3))
    x_true[:, 0] = 1.0
    x_hat = x_true.copy()
    x_hat[:, 2] = err_phi
    groups = np.array([assign_group(h, TAX) for h in risk])
    return TrajectoryRecord(
        dt=0.05,
        x_true=x_true,
        x_hat=x_hat,
        u_follower=np.zeros((n, 2)),
        u_leader=np.zeros((n, 2)),
        risk=np.asarray(risk, dtype=float),
        group=groups,
        margin=np.zeros(n),
        qp_status=np.ones(n, dtype=int),
    )


@pytest.mark.parametrize("h, group", [(0.06, 1), (0.1, 2), (0.3, 2), (0.45, 3), (0.76, 3), (-0.2, 1)])
def test_group_assignment(h, group):
    assert assign_group(h, TAX) == group


def test_quantile_examples():
    assert conformal_quantile(np.arange(1, 20), 0.05) == 19
    assert conformal_quantile([5.0], 0.45) == math.inf
    assert conformal_quantile([3.0, 1.0, 2.0], 0.5) == 2


def test_quantile_rejects_empty_and_bad_delta():
    with pytest.raises(CalibrationError):
        conformal_quantile([], 0.1)
    with pytest.raises(ValueError):
        conformal_quantile([1.0], 1.0)


@settings(max_examples=300, deadline=None)
@given(
    st.lists(st.floats(0, 10, allow_nan=False), min_size=1, max_size=80),
    st.sampled_from([0.01, 0.05, 0.1, 0.2, 0.25, 0.45, 0.5, 0.9]),
)
def test_quantile_matches_exact_reference(scores, delta):
    assert conformal_quantile(scores, delta) == reference_quantile(scores, delta)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(0, 10, allow_nan=False), min_size=1, max_size=60), st.floats(0.01, 0.99))
def test_quantile_is_monotone_in_delta(scores, delta):
    assert conformal_quantile(scores, delta) >= conformal_quantile(scores, min(delta + 0.01, 0.999))


def test_constant_error_trajectory_scores_once_in_safe_group():
    rec = make_record([0.8] * 10, 0.03)
    assert group_maxima(rec.errors((1, 1, 1)), rec.risk, TAX) == {3: pytest.approx(0.03)}


def test_group_scores_are_per_group_maxima():
    risk = [0.5, 0.5, 0.3, 0.2, 0.5, 0.3]
    err = [0.01, 0.05, 0.02, 0.07, 0.03, 0.04]
    rec = make_record(risk, err)
    got = group_maxima(rec.errors((1, 1, 1)), rec.risk, TAX)
    assert got == {2: pytest.approx(0.07), 3: pytest.approx(0.05)}


def test_scores_count_trajectories_not_steps():
    a = make_record([0.05] * 30 + [0.5] * 10, 0.01)
    b = make_record([0.5] * 40, 0.02)
    s = trajectory_scores([a, b], TAX)
    assert len(s[1]) == 1 and len(s[2]) == 0 and len(s[3]) == 2


def test_single_group_taxonomy_is_global_split_cp():
    rng = np.random.default_rng(0)
    recs = [make_record(rng.uniform(0, 1, 20), rng.exponential(0.1, 20)) for _ in range(50)]
    tab = calibrate_global(recs, 0.1)
    worst = [r.errors((1, 1, 1)).max() for r in recs]
    assert tab.q_hat == (conformal_quantile(worst, 0.1),)


def test_region_baseline_uses_only_that_group():
    rng = np.random.default_rng(1)
    recs = [make_record(rng.uniform(0, 1, 30), rng.exponential(0.1, 30)) for _ in range(120)]
    scores = trajectory_scores(recs, TAX)
    hi = calibrate_global(recs, 0.01, (TAX, 1))
    assert hi.q_hat == (conformal_quantile(scores[1], 0.01),)


def test_group_coverage_on_fresh_records():
    # errors grow as risk falls; fresh records from the same law are covered
    def draw(rng, n):
        out = []
        for _ in range(n):
            risk = rng.uniform(-0.05, 0.9, 40)
            err = rng.exponential(0.02 + 0.2 * np.clip(0.45 - risk, 0, None))
            out.append(make_record(risk, err))
        return out

    rng = np.random.default_rng(5)
    tab = calibrate(draw(rng, 450), TAX)
    assert tab.is_monotone and tab.finite
    fresh = trajectory_scores(draw(rng, 2000), TAX)
    for r, q, d in zip((1, 2, 3), tab.q_hat, TAX.deltas):
        cov = np.mean(fresh[r] <= q)
        m = len(fresh[r])
        assert cov >= 1 - d - 2 * math.sqrt(d * (1 - d) / m)


def test_unvisited_group_raises():
    with pytest.raises(CalibrationError) as err:
        calibrate([make_record([0.8] * 5, 0.01)], TAX)
    assert err.value.group == 1


def test_too_few_scores_give_infinite_quantile_with_warning():
    recs = [make_record([0.05, 0.2, 0.8], 0.01) for _ in range(2)]
    with pytest.warns(CalibrationWarning):
        tab = calibrate(recs, TAX)
    assert math.isinf(tab.q_hat[0]) and not tab.finite


def test_non_monotone_table_is_kept_and_flagged():
    recs = [make_record([0.05, 0.3, 0.8], [0.0, 0.0, 0.5]) for _ in range(200)]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", CalibrationWarning)
        tab = calibrate(recs, RiskTaxonomy((0.1, 0.45), (0.45, 0.45, 0.45)))
    assert not tab.is_monotone
    assert any("shrink" in w for w in tab.warnings)


def test_table_json_round_trip(tmp_path):
    tab = QuantileTable((math.inf, 0.2, 0.05), TAX, counts=(1, 2, 3), config_hash="abc", warnings=("w",))
    path = tmp_path / "t.json"
    tab.save(path)
    assert QuantileTable.load(path) == tab
    assert '"inf"' in path.read_text()


def test_table_rejects_overlapping_buffers():
    with pytest.raises(ValueError):
        QuantileTable((0.3, 0.2, 0.1), TAX, epsilon=0.5)


def test_margin_endpoints_and_midpoint():
    tab = QuantileTable((0.4, 0.2, 0.05), TAX, epsilon=0.12)
    assert smooth_margin(0.1, tab) == 0.4
    assert smooth_margin(0.22, tab) == pytest.approx(0.2)
    assert smooth_margin(0.16, tab) == pytest.approx(0.3)
    assert smooth_margin(0.05, tab) == 0.4
    assert smooth_margin(0.3, tab) == 0.2
    assert smooth_margin(0.9, tab) == 0.05
    assert smooth_margin(0.5, constant_table(0.0)) == 0.0


def test_margin_propagates_infinity():
    tab = QuantileTable((math.inf, 0.2, 0.05), TAX)
    assert smooth_margin(0.15, tab) == math.inf
    assert smooth_margin(0.3, tab) == 0.2


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0, 2), min_size=3, max_size=3), st.floats(0.01, 0.2))
def test_margin_is_lipschitz_and_covers_active_group(q, eps):
    tab = QuantileTable(tuple(q), TAX, epsilon=min(eps, 0.35))
    h = np.linspace(-0.5, 1.5, 20001)
    m = np.array([smooth_margin(v, tab) for v in h])
    lip = smooth_margin_lipschitz(tab)
    assert np.all(np.abs(np.diff(m)) <= lip * np.diff(h) + 1e-9)
    if tab.is_monotone:
        active = np.array([tab.q_hat[assign_group(v, TAX) - 1] for v in h])
        assert np.all(m >= active - 1e-12)

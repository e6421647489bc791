"""End-to-end acceptance checks at full scale.

The campaign fixture calibrates on 450 runs and evaluates every method on 500
fresh trials, which takes several minutes on one core.
"""

import filecmp
import math
import time
import warnings

import numpy as np
import pytest

from formation_cp.barriers import SafeSetParams, barrier_values, lie_derivatives
from formation_cp.conformal import (
    CalibrationWarning,
    QuantileTable,
    RiskTaxonomy,
    assign_group,
    smooth_margin,
    smooth_margin_lipschitz,
)
from formation_cp.controller import ControllerGains, nominal_control
from formation_cp.dynamics import ControlInput, KinematicsParams, RelativeState, integrate_feedback_step, state_derivative
from formation_cp.harness import ExperimentConfig, run_calibration_campaign, run_evaluation, summarize
from formation_cp.harness.campaign import coverage_table, one_sided_gap_pvalue, wilson_interval
from formation_cp.harness.cli import main
from formation_cp.oracles import run_qp_oracle, run_quantile_oracle

N_CAL = 450
N_EVAL = 500
ORDER = ("risk_aware", "global_high", "global_low", "nominal")


@pytest.fixture(scope="module")
def campaign():
    cfg = ExperimentConfig()
    t0 = time.perf_counter()
    cal = run_calibration_campaign(cfg, N_CAL)
    outcomes = {"nominal": run_evaluation(cfg, cal.tables, N_EVAL, "nominal")}
    coverage_seconds = time.perf_counter() - t0
    for m in ORDER[:-1]:
        outcomes[m] = run_evaluation(cfg, cal.tables, N_EVAL, m)
    summaries = {m: summarize(o, m) for m, o in outcomes.items()}
    return cfg, cal.tables, outcomes, summaries, coverage_seconds


def test_criterion_01_group_coverage(campaign, verdict):
    _, tables, outcomes, _, seconds = campaign
    # fresh runs of the calibration pipeline (zero-margin filter), scored
    # against the risk-aware radii
    rows = coverage_table(outcomes["nominal"], tables.risk_aware)
    ok = all(r["pass"] for r in rows) and seconds < 300
    detail = "; ".join(
        f"group {r['group']}: {r['coverage']:.3f} >= {r['floor']:.3f} (m={r['visiting']})" for r in rows
    )
    ra = coverage_table(outcomes["risk_aware"], tables.risk_aware)
    info = ", ".join(
        f"g{r['group']} {r['coverage']:.3f}/{r['floor']:.3f}" if r["visiting"] else f"g{r['group']} unvisited"
        for r in ra
    )
    verdict(1, ok, f"{detail}; {seconds:.0f}s [risk-aware loop, reported only: {info}]")
    assert ok


def test_criterion_02_safety_bound(campaign, verdict):
    s = campaign[3]["risk_aware"]
    lo, hi = wilson_interval(s["successes"], s["n_trials"])
    ok = lo >= 0.44
    verdict(2, ok, f"risk_aware safety {s['success_rate']:.3f} (95% CI {lo:.3f}-{hi:.3f}) vs bound 0.44")
    assert ok


def test_criterion_03_method_ordering(campaign, verdict):
    s = campaign[3]
    pvals = []
    for better, worse in zip(ORDER, ORDER[1:]):
        a, b = s[better], s[worse]
        pvals.append(one_sided_gap_pvalue(a["successes"], a["n_trials"], b["successes"], b["n_trials"]))
    rates = [s[m]["success_rate"] for m in ORDER]
    ok = all(x > y for x, y in zip(rates, rates[1:])) and all(p < 0.05 for p in pvals)
    detail = " > ".join(f"{m} {s[m]['success_rate']:.3f}" for m in ORDER)
    verdict(3, ok, f"{detail}; one-sided p = {', '.join(f'{p:.1e}' for p in pvals)}")
    assert ok


def test_criterion_04_conservatism(campaign, verdict):
    s = campaign[3]
    ra, gh = s["risk_aware"], s["global_high"]
    ok = ra["mean_margin"] < gh["mean_margin"] and gh["qp_infeasible_share"] > ra["qp_infeasible_share"]
    verdict(
        4,
        ok,
        f"mean margin {ra['mean_margin']:.3f} < {gh['mean_margin']:.3f}; "
        f"infeasible share {gh['qp_infeasible_share']:.3f} > {ra['qp_infeasible_share']:.3f}",
    )
    assert ok


def test_criterion_05_qp_oracle(verdict):
    rep = run_qp_oracle(n=1000, seed=0, grid=400)
    ok = rep.passed(u_tol=1e-3, kkt_tol=1e-8) and rep.seconds < 30
    verdict(
        5,
        ok,
        f"{rep.n} instances ({rep.n_feasible} feasible), verdict mismatches {rep.verdict_mismatches}, "
        f"grid beats solver {rep.beaten}, resolution gap {rep.max_resolution_gap:.1e}, "
        f"KKT {rep.max_kkt:.1e}, {rep.seconds:.1f}s",
    )
    assert ok


def test_criterion_06_quantile_oracle(verdict):
    rep = run_quantile_oracle(n=10_000, seed=0)
    ok = rep.mismatches == 0 and rep.n_sentinel > 0
    verdict(6, ok, f"{rep.n} multisets, {rep.n_sentinel} with k > n, {rep.mismatches} mismatches")
    assert ok


def test_criterion_07_controller_exactness(verdict):
    kin, gains = KinematicsParams(), ControllerGains()
    u_l = ControlInput(0.3, 0.0)
    worst = {}
    for name, x0 in (("e_L", RelativeState(1.6, 0.0, 0.0)), ("e_alpha", RelativeState(1.2, 0.4, 0.0))):
        x = x0
        e0 = (gains.L_d - x0.L, gains.alpha_d - x0.alpha)
        k_gain = gains.k_L if name == "e_L" else gains.k_alpha
        i = 0 if name == "e_L" else 1
        rel = 0.0
        for step in range(1, 41):
            x = integrate_feedback_step(x, lambda s: nominal_control(s, u_l, gains, kin), u_l, kin, 0.05)
            e = (gains.L_d - x.L, gains.alpha_d - x.alpha)[i]
            rel = max(rel, abs(e / e0[i] / math.exp(-k_gain * step * 0.05) - 1))
        worst[name] = rel
    ok = all(v < 0.02 for v in worst.values())
    verdict(7, ok, ", ".join(f"{k} worst relative error {v:.1e}" for k, v in worst.items()))
    assert ok


def test_criterion_08_lie_derivatives(verdict):
    rng = np.random.default_rng(8)
    kin, safe = KinematicsParams(), SafeSetParams()
    eps = 1e-6
    worst = 0.0
    for _ in range(10_000):
        x = RelativeState(*rng.uniform([0.3, -1.5, -1.0], [3.0, 1.5, 1.0]))
        u = ControlInput(*rng.uniform([-1, -2], [1, 2]))
        u_l = ControlInput(*rng.uniform([0, -0.5], [0.5, 0.5]))
        xdot = np.asarray(state_derivative(x, u, u_l, kin))
        h0 = np.asarray(barrier_values(x, safe).h)
        h1 = np.asarray(barrier_values(RelativeState(*(np.asarray(x) + eps * xdot)), safe).h)
        analytic = np.array([lf + gv * u.v + gw * u.omega for lf, (gv, gw) in lie_derivatives(x, u_l, kin)])
        worst = max(worst, float(np.max(np.abs(analytic - (h1 - h0) / eps))))
    ok = worst < 1e-4
    verdict(8, ok, f"10000 states, worst |analytic - finite difference| = {worst:.1e}")
    assert ok


def test_criterion_09_margin_continuity(campaign, verdict):
    tables = [campaign[1].risk_aware]
    rng = np.random.default_rng(9)
    for _ in range(200):
        q = np.sort(rng.uniform(0, 1, 3))[::-1] if rng.random() < 0.7 else rng.uniform(0, 1, 3)
        tables.append(QuantileTable(tuple(q), RiskTaxonomy(), epsilon=float(rng.uniform(0.01, 0.35))))
    h = np.linspace(-0.5, 1.5, 200_001)
    worst_lip = 0.0
    cover_ok = True
    for tab in tables:
        m = np.array([smooth_margin(v, tab) for v in h])
        lip = smooth_margin_lipschitz(tab)
        slope = np.abs(np.diff(m)) / np.diff(h)
        worst_lip = max(worst_lip, float(np.max(slope - lip)))
        if tab.is_monotone:
            active = np.array([tab.q_hat[assign_group(v, tab.taxonomy) - 1] for v in h])
            cover_ok &= bool(np.all(m >= active - 1e-12))
    ok = worst_lip <= 1e-6 and cover_ok
    verdict(9, ok, f"{len(tables)} tables on a 2e5-point grid, worst slope excess {worst_lip:.1e}, coverage kept {cover_ok}")
    assert ok


def _pipeline(root, workers):
    cfg = ["--config", str(root / "cfg.json"), "--workers", str(workers)]
    cal, runs, summ, rep = (root / f"w{workers}" / d for d in ("cal", "runs", "sum", "rep"))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", CalibrationWarning)
        codes = [main(["calibrate", *cfg, "--trials", "40", "--out", str(cal)])]
    codes.append(main(["run", *cfg, "--table", str(cal), "--method", "all", "--trials", "12", "--out", str(runs)]))
    dirs = [str(runs / m) for m in ORDER]
    codes.append(main(["evaluate", *dirs, "--table", str(cal), "--out", str(summ)]))
    codes.append(main(["report", str(summ), "--out", str(rep)]))
    return codes, root / f"w{workers}"


def _tree_diff(a, b):
    cmp = filecmp.dircmp(a, b)
    bad = cmp.left_only + cmp.right_only + cmp.diff_files
    files = [f for f in cmp.common_files if not filecmp.cmp(a / f, b / f, shallow=False)]
    bad += files
    for sub in cmp.common_dirs:
        bad += [f"{sub}/{x}" for x in _tree_diff(a / sub, b / sub)]
    return sorted(set(bad))


def test_criterion_10_reproducibility(tmp_path, verdict):
    ExperimentConfig(taxonomy=RiskTaxonomy((0.1, 0.45), (0.05, 0.10, 0.45))).save(tmp_path / "cfg.json")
    codes1, out1 = _pipeline(tmp_path, 1)
    codes2, out2 = _pipeline(tmp_path, 2)
    diff = _tree_diff(out1, out2)
    n_files = sum(1 for p in out1.rglob("*") if p.is_file())
    ok = codes1 == codes2 == [0, 0, 0, 0] and not diff
    verdict(10, ok, f"{n_files} artifacts byte-identical across 1 and 2 workers" if ok else f"exit codes {codes1} {codes2}, differing {diff}")
    assert ok

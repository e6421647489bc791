"""Calibration campaigns, Monte Carlo evaluation and summary statistics."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from statsmodels.stats.proportion import proportion_confint, proportions_ztest

from ..conformal import (
    QuantileTable,
    TrajectoryRecord,
    calibrate,
    calibrate_global,
    constant_table,
)
from .config import METHODS, ExperimentConfig
from .simulate import CALIBRATION_STREAM, EVALUATION_STREAM, TrialOutcome, simulate_trial

log = logging.getLogger(__name__)


class HashMismatchError(RuntimeError):
    """Calibration and evaluation configs describe different pipelines."""


@dataclass(frozen=True)
class TableSet:
    """Risk-aware table plus the two single-radius baselines of one calibration."""

    risk_aware: QuantileTable
    global_low: QuantileTable
    global_high: QuantileTable

    @property
    def config_hash(self) -> str:
        return self.risk_aware.config_hash

    def for_method(self, method: str) -> QuantileTable:
        if method == "nominal":
            return constant_table(0.0, "nominal", self.config_hash)
        if method not in METHODS:
            raise ValueError(f"unknown method {method!r}")
        return getattr(self, method)


def _run_one(args):
    config, table, index, stream, method, keep = args
    return simulate_trial(config, table, index, stream, method, keep)


def run_trials(
    config: ExperimentConfig,
    table: QuantileTable,
    indices: Sequence[int],
    stream: int,
    method: str,
    keep_records: bool = False,
    workers: int | None = None,
) -> list[tuple[TrialOutcome, TrajectoryRecord | None]]:
    """Simulate trials, merging results in trial-index order."""
    workers = config.workers if workers is None else workers
    jobs = [(config, table, i, stream, method, keep_records) for i in indices]
    if workers <= 1 or len(jobs) < 2:
        return [_run_one(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_one, jobs, chunksize=max(1, len(jobs) // (4 * workers))))


@dataclass
class CalibrationResult:
    tables: TableSet
    records: list[TrajectoryRecord]
    outcomes: list[TrialOutcome]


def calibrate_tables(config: ExperimentConfig, records: Sequence[TrajectoryRecord]) -> TableSet:
    h = config.pipeline_hash()
    tax = config.taxonomy
    ra = calibrate(records, tax, config.epsilon, config.norm_weights, h)
    lo_delta, lo_group = config.global_low
    hi_delta, hi_group = config.global_high
    lo = calibrate_global(records, lo_delta, (tax, lo_group), config.norm_weights, h, "global_low")
    hi = calibrate_global(records, hi_delta, (tax, hi_group), config.norm_weights, h, "global_high")
    return TableSet(ra, lo, hi)


def run_calibration_campaign(config: ExperimentConfig, n_runs: int | None = None) -> CalibrationResult:
    """Simulate calibration runs and calibrate every method's table.

    Calibration runs use the untightened filter (zero margin) since the
    risk-aware radii do not exist yet.

    Raises
    ------
    conformal.CalibrationError
        If a risk group is never visited; ``.group`` names it.
    """
    n_runs = config.n_calibration_runs if n_runs is None else n_runs
    zero = constant_table(0.0, "nominal", config.pipeline_hash())
    results = run_trials(config, zero, range(n_runs), CALIBRATION_STREAM, "nominal", True)
    records = [r for _, r in results if r is not None]
    outcomes = [o for o, _ in results]
    tables = calibrate_tables(config, records)
    log.info("calibrated %s from %d runs: q_hat=%s", tables.config_hash, n_runs, tables.risk_aware.q_hat)
    return CalibrationResult(tables, records, outcomes)


def check_hash(config: ExperimentConfig, tables: TableSet) -> None:
    h = config.pipeline_hash()
    for t in (tables.risk_aware, tables.global_low, tables.global_high):
        if t.config_hash != h:
            raise HashMismatchError(
                f"table {t.label!r} was calibrated for pipeline {t.config_hash!r}, "
                f"but this config hashes to {h!r}"
            )


def run_evaluation(
    config: ExperimentConfig,
    tables: TableSet,
    n_trials: int | None = None,
    method: str | None = None,
) -> list[TrialOutcome]:
    """Monte Carlo evaluation of one method on fresh seeds.

    Raises
    ------
    HashMismatchError
        If the tables were calibrated on a different pipeline.
    """
    check_hash(config, tables)
    method = method or config.method
    n_trials = config.n_trials if n_trials is None else n_trials
    table = tables.for_method(method)
    return [o for o, _ in run_trials(config, table, range(n_trials), EVALUATION_STREAM, method)]


def wilson_interval(successes: int, n: int, alpha: float = 0.05) -> tuple[float, float]:
    if n == 0:
        return (math.nan, math.nan)
    lo, hi = proportion_confint(successes, n, alpha=alpha, method="wilson")
    return float(lo), float(hi)


def one_sided_gap_pvalue(s1: int, n1: int, s2: int, n2: int) -> float:
    """p-value of the two-proportion z-test for ``p1 > p2``."""
    if n1 == 0 or n2 == 0:
        return math.nan
    if s1 + s2 in (0, n1 + n2):
        return 1.0
    _, p = proportions_ztest([s1, s2], [n1, n2], alternative="larger")
    return float(p)


def _mean_std(values) -> tuple[float, float]:
    a = np.asarray([v for v in values if math.isfinite(v)], dtype=float)
    if a.size == 0:
        return (math.nan, math.nan)
    return float(a.mean()), float(a.std(ddof=1)) if a.size > 1 else 0.0


def coverage_table(outcomes: Sequence[TrialOutcome], table: QuantileTable) -> list[dict]:
    """Trajectory-level coverage of the risk-aware radii per visited group.

    A trajectory covers group ``r`` when its worst error while in ``r`` is at
    most ``q_hat_r``.  The floor is ``1 - delta_r - 2 sqrt(delta_r (1 - delta_r) / m_r)``.
    """
    rows = []
    for r, (q, delta) in enumerate(zip(table.q_hat, table.taxonomy.deltas), start=1):
        scores = [o.group_scores[r - 1] for o in outcomes if math.isfinite(o.group_scores[r - 1])]
        m = len(scores)
        covered = sum(s <= q for s in scores)
        cov = covered / m if m else math.nan
        floor = 1 - delta - 2 * math.sqrt(delta * (1 - delta) / m) if m else math.nan
        rows.append(
            {
                "group": r,
                "delta": delta,
                "q_hat": q,
                "visiting": m,
                "covered": covered,
                "coverage": cov,
                "target": 1 - delta,
                "floor": floor,
                "pass": bool(m and cov >= floor),
            }
        )
    return rows


def summarize(outcomes: Sequence[TrialOutcome], method: str | None = None) -> dict:
    """Success rate with Wilson interval, tracking statistics, margins and failures.

    Tracking statistics are reported conditioned on success and over all trials.
    """
    n = len(outcomes)
    method = method or (outcomes[0].method if outcomes else "")
    if n == 0:
        return {"method": method, "n_trials": 0}
    wins = [o for o in outcomes if o.success]
    s = len(wins)
    lo, hi = wilson_interval(s, n)
    hist = {}
    for o in outcomes:
        if o.failure_mode:
            hist[o.failure_mode] = hist.get(o.failure_mode, 0) + 1
    out = {
        "method": method,
        "n_trials": n,
        "successes": s,
        "success_rate": s / n,
        "success_ci95": [lo, hi],
        "failure_modes": dict(sorted(hist.items())),
        "qp_infeasible_share": hist.get("qp_infeasible", 0) / n,
        "mean_margin": _mean_std(o.mean_margin for o in outcomes)[0],
    }
    for key in ("mean_abs_eL", "mean_abs_ealpha", "max_abs_eL", "max_abs_ealpha"):
        m_s, sd_s = _mean_std(getattr(o, key) for o in wins)
        m_a, sd_a = _mean_std(getattr(o, key) for o in outcomes)
        out[key] = {"success_mean": m_s, "success_std": sd_s, "all_mean": m_a, "all_std": sd_a}
    k = len(outcomes[0].group_fractions)
    out["group_time_fraction"] = [
        float(np.mean([o.group_fractions[r] for o in outcomes])) for r in range(k)
    ]
    return out


def time_series(outcomes: Sequence[TrialOutcome], n_steps: int, dt: float) -> dict[str, np.ndarray]:
    """Per-step means of |e_L|, |e_alpha| and the margin over successful trials."""
    wins = [o for o in outcomes if o.success and len(o.series.get("abs_eL", ())) == n_steps]
    out = {"t": np.arange(n_steps) * dt, "n_success": np.full(n_steps, len(wins))}
    for key in ("abs_eL", "abs_ealpha", "margin"):
        if wins:
            out[key] = np.mean([o.series[key] for o in wins], axis=0)
        else:
            out[key] = np.full(n_steps, np.nan)
    return out

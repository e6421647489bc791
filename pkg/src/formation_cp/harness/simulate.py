"""Closed-loop simulation of a single leader-follower trial."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..barriers import barrier_values
from ..conformal import QuantileTable, TrajectoryRecord, group_maxima
from ..dynamics import DegenerateStateError, RelativeState, integrate_step, wrap_angle
from ..perception import PerceptionStream
from ..qp import INFEASIBLE
from ..safety_filter import safe_step
from .config import ExperimentConfig
from .schedule import leader_schedule

CALIBRATION_STREAM = 0
EVALUATION_STREAM = 1

FAILURE_MODES = ("fov_violation", "range_violation", "qp_infeasible", "degenerate")


def trial_rng(master_seed: int, stream: int, trial_index: int) -> np.random.Generator:
    """Independent generator for one trial; never depends on worker layout."""
    return np.random.default_rng(np.random.SeedSequence([master_seed, stream, trial_index]))


def sample_initial_state(config: ExperimentConfig, rng: np.random.Generator) -> RelativeState:
    r = config.initial_state
    return RelativeState(
        float(rng.uniform(*r.L)), float(rng.uniform(*r.alpha)), float(rng.uniform(*r.phi))
    )


@dataclass
class TrialOutcome:
    trial_index: int
    method: str
    success: bool
    failure_mode: str | None
    failure_step: int | None
    steps_run: int
    mean_abs_eL: float
    max_abs_eL: float
    mean_abs_ealpha: float
    max_abs_ealpha: float
    mean_margin: float
    infeasible_steps: int
    group_fractions: tuple[float, ...]
    # worst weighted estimation error per risk group (nan if never visited)
    group_scores: tuple[float, ...]
    series: dict = field(default_factory=dict, repr=False)

    def row(self) -> dict:
        d = {
            "trial": self.trial_index,
            "method": self.method,
            "success": int(self.success),
            "failure_mode": self.failure_mode or "",
            "failure_step": "" if self.failure_step is None else self.failure_step,
            "steps_run": self.steps_run,
            "mean_abs_eL": self.mean_abs_eL,
            "max_abs_eL": self.max_abs_eL,
            "mean_abs_ealpha": self.mean_abs_ealpha,
            "max_abs_ealpha": self.max_abs_ealpha,
            "mean_margin": self.mean_margin,
            "infeasible_steps": self.infeasible_steps,
        }
        for r, f in enumerate(self.group_fractions, start=1):
            d[f"frac_group{r}"] = f
        for r, s in enumerate(self.group_scores, start=1):
            d[f"score_group{r}"] = s
        return d


def _violation_mode(h) -> str:
    return "range_violation" if min(h[0], h[1]) < min(h[2], h[3]) else "fov_violation"


def simulate_trial(
    config: ExperimentConfig,
    table: QuantileTable,
    trial_index: int,
    stream: int = EVALUATION_STREAM,
    method: str | None = None,
    keep_record: bool = False,
):
    """Run one trial of the closed loop.

    The margin comes from ``table`` (a constant table gives the nominal or a
    global baseline).  The trial continues after a safety violation so that
    per-group errors are observed over the full horizon, and stops at the
    first infeasible QP or degenerate state.

    Returns
    -------
    (TrialOutcome, TrajectoryRecord | None)
    """
    method = method or config.method
    rng = trial_rng(config.master_seed, stream, trial_index)
    params = config.filter_params()
    safe = config.safe_set
    model = config.perception
    kin = config.kinematics
    gains = config.gains
    weights = config.norm_weights
    dt = config.dt
    tax = config.taxonomy
    n_steps = config.n_steps

    x = sample_initial_state(config, rng)
    perceive = PerceptionStream(model, rng)
    failure = None
    failure_step = None
    infeasible_steps = 0

    xs, xhs, uf, ul, risk_hat, margins, status = [], [], [], [], [], [], []
    eL, ea = [], []

    k = 0
    for k in range(n_steps):
        u_l = leader_schedule(k * dt, config.schedule)
        h_true = barrier_values(x, safe).h
        hmin = min(h_true)
        if hmin < 0.0 and failure is None:
            failure, failure_step = _violation_mode(h_true), k
        x_hat = perceive(x, hmin)
        try:
            u, diag = safe_step(x_hat, u_l, table, params)
        except DegenerateStateError:
            failure = failure or "degenerate"
            failure_step = k if failure_step is None else failure_step
            break
        xs.append(x)
        xhs.append(x_hat)
        uf.append(u)
        ul.append(u_l)
        risk_hat.append(diag.risk)
        margins.append(diag.margin)
        status.append(0 if diag.status == INFEASIBLE else 1)
        eL.append(gains.L_d - x.L)
        ea.append(wrap_angle(gains.alpha_d - x.alpha))
        if diag.status == INFEASIBLE:
            infeasible_steps += 1
            if failure is None:
                failure, failure_step = "qp_infeasible", k
            break
        try:
            x = integrate_step(x, u, u_l, kin, dt)
        except DegenerateStateError:
            if failure is None:
                failure, failure_step = "degenerate", k
            break
    else:
        h_end = barrier_values(x, safe).h
        if min(h_end) < 0.0 and failure is None:
            failure, failure_step = _violation_mode(h_end), n_steps

    n = len(xs)
    x_true = np.asarray(xs, dtype=float).reshape(n, 3)
    x_hat_arr = np.asarray(xhs, dtype=float).reshape(n, 3)
    risk_arr = np.asarray(risk_hat, dtype=float)
    margin_arr = np.asarray(margins, dtype=float)
    groups = np.searchsorted(np.asarray(tax.thresholds), risk_arr, side="right") + 1
    abs_eL = np.abs(np.asarray(eL))
    abs_ea = np.abs(np.asarray(ea))

    if n:
        err = np.sqrt((x_true - x_hat_arr) ** 2 @ np.asarray(weights))
        gmax = group_maxima(err, risk_arr, tax)
        fractions = tuple(float(np.mean(groups == r)) for r in range(1, tax.n_groups + 1))
    else:
        gmax, fractions = {}, tuple(0.0 for _ in range(tax.n_groups))
    scores = tuple(gmax.get(r, math.nan) for r in range(1, tax.n_groups + 1))

    def _stat(a, fn):
        return float(fn(a)) if len(a) else math.nan

    finite_margin = margin_arr[np.isfinite(margin_arr)]
    outcome = TrialOutcome(
        trial_index=trial_index,
        method=method,
        success=failure is None,
        failure_mode=failure,
        failure_step=failure_step,
        steps_run=n,
        mean_abs_eL=_stat(abs_eL, np.mean),
        max_abs_eL=_stat(abs_eL, np.max),
        mean_abs_ealpha=_stat(abs_ea, np.mean),
        max_abs_ealpha=_stat(abs_ea, np.max),
        mean_margin=_stat(finite_margin, np.mean) if len(finite_margin) == n else math.inf,
        infeasible_steps=infeasible_steps,
        group_fractions=fractions,
        group_scores=scores,
        series={"abs_eL": abs_eL, "abs_ealpha": abs_ea, "margin": margin_arr},
    )
    record = None
    if keep_record and n:
        record = TrajectoryRecord(
            dt=dt,
            x_true=x_true,
            x_hat=x_hat_arr,
            u_follower=np.asarray(uf, dtype=float).reshape(n, 2),
            u_leader=np.asarray(ul, dtype=float).reshape(n, 2),
            risk=risk_arr,
            group=groups.astype(int),
            margin=margin_arr,
            qp_status=np.asarray(status, dtype=int),
        )
    return outcome, record


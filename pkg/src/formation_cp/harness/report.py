"""Result files: summary table, averaged time series and coverage table.

Everything is written as comma-separated text plus one ``metadata.json`` per
directory.  Numbers are formatted with ``repr`` so identical inputs give
byte-identical files.
"""

from __future__ import annotations

import csv
import gzip
import io
import json
import math
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .simulate import FAILURE_MODES, TrialOutcome

SUMMARY_COLUMNS = (
    "method",
    "n_trials",
    "successes",
    "success_rate",
    "ci95_low",
    "ci95_high",
    "mean_margin",
    "qp_infeasible_share",
    *(f"n_{m}" for m in FAILURE_MODES),
    "mean_abs_eL_success",
    "std_abs_eL_success",
    "mean_abs_ealpha_success",
    "std_abs_ealpha_success",
    "mean_abs_eL_all",
    "mean_abs_ealpha_all",
)


def fmt(value) -> str:
    """Deterministic text for one cell."""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    return str(value)


def csv_text(columns: Sequence[str], rows: Iterable[Mapping]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([fmt(row.get(c)) for c in columns])
    return buf.getvalue()


def write_text(path: Path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    return path


def write_json(path: Path, obj) -> Path:
    return write_text(path, json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else fmt(v)
    return obj


def summary_row(summary: Mapping) -> dict:
    """Flatten one ``campaign.summarize`` result into a table row."""
    row = {"method": summary["method"], "n_trials": summary["n_trials"]}
    if not summary["n_trials"]:
        return row
    lo, hi = summary["success_ci95"]
    row.update(
        successes=summary["successes"],
        success_rate=summary["success_rate"],
        ci95_low=lo,
        ci95_high=hi,
        mean_margin=summary["mean_margin"],
        qp_infeasible_share=summary["qp_infeasible_share"],
    )
    for m in FAILURE_MODES:
        row[f"n_{m}"] = summary["failure_modes"].get(m, 0)
    for key, short in (("mean_abs_eL", "abs_eL"), ("mean_abs_ealpha", "abs_ealpha")):
        stats = summary[key]
        row[f"mean_{short}_success"] = stats["success_mean"]
        row[f"std_{short}_success"] = stats["success_std"]
        row[f"mean_{short}_all"] = stats["all_mean"]
    return row


def union_bound(deltas: Sequence[float]) -> float:
    """Worst-case safety guarantee ``1 - sum(delta_r)`` over all groups."""
    return 1.0 - float(sum(deltas))


def guarantee_line(deltas: Sequence[float], summaries: Sequence[Mapping]) -> str:
    bound = union_bound(deltas)
    parts = [f"union bound 1 - sum(delta) = {bound:.2f}"]
    for s in summaries:
        if s.get("method") == "risk_aware" and s.get("n_trials"):
            lo, hi = s["success_ci95"]
            parts.append(
                f"risk_aware empirical safety = {s['success_rate']:.3f} "
                f"(95% CI {lo:.3f}-{hi:.3f}, n={s['n_trials']})"
            )
    return "; ".join(parts)


def outcomes_csv(outcomes: Sequence[TrialOutcome]) -> str:
    if not outcomes:
        return "trial\n"
    rows = [o.row() for o in outcomes]
    return csv_text(list(rows[0]), rows)


def series_csv(outcomes: Sequence[TrialOutcome], dt: float) -> str:
    """Per-step series of every trial (long format)."""
    rows = []
    for o in outcomes:
        s = o.series
        for k in range(len(s.get("abs_eL", ()))):
            rows.append(
                {
                    "trial": o.trial_index,
                    "step": k,
                    "t": k * dt,
                    "abs_eL": s["abs_eL"][k],
                    "abs_ealpha": s["abs_ealpha"][k],
                    "margin": s["margin"][k],
                }
            )
    return csv_text(("trial", "step", "t", "abs_eL", "abs_ealpha", "margin"), rows)


RECORD_COLUMNS = (
    "run", "step", "t",
    "L", "alpha", "phi", "L_hat", "alpha_hat", "phi_hat",
    "v", "omega", "v_leader", "omega_leader",
    "risk", "group", "margin", "qp_status",
)


def write_records(path, records: Sequence) -> Path:
    """Calibration trajectories as gzip-compressed CSV (one row per step).

    The gzip header carries no timestamp, so the bytes are reproducible.
    """
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RECORD_COLUMNS)
    for run, r in enumerate(records):
        for k in range(len(r)):
            w.writerow(
                [run, k, fmt(k * r.dt)]
                + [fmt(v) for v in r.x_true[k]]
                + [fmt(v) for v in r.x_hat[k]]
                + [fmt(v) for v in r.u_follower[k]]
                + [fmt(v) for v in r.u_leader[k]]
                + [fmt(r.risk[k]), int(r.group[k]), fmt(r.margin[k]), int(r.qp_status[k])]
            )
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as raw, gzip.GzipFile(fileobj=raw, mode="wb", mtime=0, filename="") as gz:
        gz.write(buf.getvalue().encode())
    return path


def read_outcomes(outcomes_path, series_path=None) -> list[TrialOutcome]:
    """Rebuild outcomes written by :func:`outcomes_csv` / :func:`series_csv`."""
    with open(outcomes_path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    series: dict[int, dict[str, list]] = {}
    if series_path is not None and Path(series_path).exists():
        with open(series_path, newline="") as fh:
            for r in csv.DictReader(fh):
                d = series.setdefault(int(r["trial"]), {"abs_eL": [], "abs_ealpha": [], "margin": []})
                for key in d:
                    d[key].append(float(r[key]))
    out = []
    for r in rows:
        groups = sorted(int(k[len("frac_group"):]) for k in r if k.startswith("frac_group"))
        idx = int(r["trial"])
        s = {k: np.asarray(v) for k, v in series.get(idx, {}).items()}
        fs = r["failure_step"]
        out.append(
            TrialOutcome(
                trial_index=idx,
                method=r["method"],
                success=bool(int(r["success"])),
                failure_mode=r["failure_mode"] or None,
                failure_step=int(fs) if fs else None,
                steps_run=int(r["steps_run"]),
                mean_abs_eL=float(r["mean_abs_eL"]),
                max_abs_eL=float(r["max_abs_eL"]),
                mean_abs_ealpha=float(r["mean_abs_ealpha"]),
                max_abs_ealpha=float(r["max_abs_ealpha"]),
                mean_margin=float(r["mean_margin"]),
                infeasible_steps=int(r["infeasible_steps"]),
                group_fractions=tuple(float(r[f"frac_group{g}"]) for g in groups),
                group_scores=tuple(float(r[f"score_group{g}"]) for g in groups),
                series=s,
            )
        )
    return out


def write_report(
    out_dir,
    summaries: Sequence[Mapping],
    series: Mapping[str, Mapping[str, np.ndarray]] | None = None,
    coverage: Sequence[Mapping] | None = None,
    deltas: Sequence[float] = (0.01, 0.10, 0.45),
    metadata: Mapping | None = None,
) -> list[Path]:
    """Write the result tables of one experiment.

    Parameters
    ----------
    out_dir : path
    summaries : list of dict
        Output of ``campaign.summarize``, one per method.
    series : dict, optional
        ``method -> campaign.time_series(...)``; one CSV per method.
    coverage : list of dict, optional
        Rows of ``campaign.coverage_table`` (risk-aware radii), each tagged
        with the ``method`` whose trials were scored.
    deltas : sequence of float
        Per-group miscoverage levels, used for the union-bound line.
    metadata : dict, optional
        Extra entries for ``metadata.json`` (config hash, dt, ...).

    Returns
    -------
    list of Path
        Files written, in a fixed order.
    """
    out = Path(out_dir)
    written = [write_text(out / "summary.csv", csv_text(SUMMARY_COLUMNS, [summary_row(s) for s in summaries]))]
    for method, ts in sorted((series or {}).items()):
        cols = ("t", "n_success", "abs_eL", "abs_ealpha", "margin")
        rows = [{c: ts[c][k] for c in cols} for k in range(len(ts["t"]))]
        written.append(write_text(out / f"timeseries_{method}.csv", csv_text(cols, rows)))
    if coverage is not None:
        cols = ("method", "group", "delta", "q_hat", "visiting", "covered", "coverage", "target", "floor", "pass")
        written.append(write_text(out / "coverage.csv", csv_text(cols, coverage)))
    line = guarantee_line(deltas, summaries)
    written.append(write_text(out / "guarantee.txt", line + "\n"))
    meta = dict(metadata or {})
    meta.update(
        union_bound=union_bound(deltas),
        deltas=list(deltas),
        files=[p.name for p in written],
    )
    written.append(write_json(out / "metadata.json", meta))
    return written

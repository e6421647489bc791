"""Command-line entry point.

    formation-cp calibrate --config cfg.json --out cal/
    formation-cp run --table cal/ --method all --trials 200 --out runs/
    formation-cp evaluate runs/* --table cal/ --out summaries/
    formation-cp report summaries/ --out report/
    formation-cp oracle

Exit codes: 0 success, 2 configuration error, 3 calibration insufficiency,
4 table/config hash mismatch.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

from ..conformal import CalibrationError, QuantileTable
from .campaign import (
    HashMismatchError,
    TableSet,
    check_hash,
    coverage_table,
    run_calibration_campaign,
    run_evaluation,
    summarize,
    time_series,
)
from .config import METHODS, ConfigError, ExperimentConfig
from .report import (
    outcomes_csv,
    read_outcomes,
    series_csv,
    write_json,
    write_records,
    write_report,
    write_text,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_CALIBRATION = 3
EXIT_HASH = 4

log = logging.getLogger("formation_cp")

TABLE_FILES = {m: f"{m}.json" for m in ("risk_aware", "global_low", "global_high")}


def load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    changes = {}
    if getattr(args, "seed", None) is not None:
        changes["master_seed"] = args.seed
    if getattr(args, "workers", None) is not None:
        changes["workers"] = args.workers
    return cfg.with_(**changes) if changes else cfg


def artifact_config(cfg: ExperimentConfig) -> dict:
    """Config as written to result files; the worker count never changes results."""
    d = cfg.to_dict()
    d.pop("workers")
    return d


def load_tables(table_dir) -> TableSet:
    d = Path(table_dir)
    try:
        return TableSet(**{m: QuantileTable.load(d / f) for m, f in TABLE_FILES.items()})
    except (OSError, ValueError, KeyError) as exc:
        raise ConfigError(f"cannot read quantile tables from {d}: {exc}") from exc


def cmd_calibrate(args) -> int:
    cfg = load_config(args)
    n_runs = cfg.n_calibration_runs if args.trials is None else args.trials
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "config.json", artifact_config(cfg))
    try:
        result = run_calibration_campaign(cfg, n_runs)
    except CalibrationError as exc:
        print(f"calibration failed: {exc}", file=sys.stderr)
        return EXIT_CALIBRATION
    tables = result.tables
    for method, fname in TABLE_FILES.items():
        getattr(tables, method).save(out / fname)
    if not args.no_records:
        write_records(out / "records.csv.gz", result.records)
    write_json(
        out / "metadata.json",
        {
            "config_hash": cfg.pipeline_hash(),
            "master_seed": cfg.master_seed,
            "n_runs": n_runs,
            "dt": cfg.dt,
            "quantiles": {m: list(getattr(tables, m).q_hat) for m in TABLE_FILES},
            "counts": list(tables.risk_aware.counts),
            "warnings": list(tables.risk_aware.warnings),
        },
    )
    q = ", ".join("inf" if math.isinf(v) else f"{v:.4f}" for v in tables.risk_aware.q_hat)
    print(f"risk-aware quantiles: [{q}]  (hash {tables.config_hash})")
    if not tables.risk_aware.finite:
        print("calibration insufficient: infinite quantile (too few scores for its delta)", file=sys.stderr)
        return EXIT_CALIBRATION
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = load_config(args)
    tables = load_tables(args.table)
    try:
        check_hash(cfg, tables)
    except HashMismatchError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_HASH
    methods = METHODS if args.method == "all" else (args.method or cfg.method,)
    n = cfg.n_trials if args.trials is None else args.trials
    for method in methods:
        if method not in METHODS:
            raise ConfigError(f"unknown method {method!r}")
        outcomes = run_evaluation(cfg, tables, n, method)
        d = Path(args.out) / method
        write_text(d / "outcomes.csv", outcomes_csv(outcomes))
        write_text(d / "series.csv", series_csv(outcomes, cfg.dt))
        write_json(
            d / "metadata.json",
            {
                "method": method,
                "n_trials": n,
                "config_hash": cfg.pipeline_hash(),
                "master_seed": cfg.master_seed,
                "dt": cfg.dt,
                "n_steps": cfg.n_steps,
                "deltas": list(cfg.taxonomy.deltas),
                "config": artifact_config(cfg),
            },
        )
        ok = sum(o.success for o in outcomes)
        print(f"{method}: {ok}/{n} successful")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    tables = load_tables(args.table) if args.table else None
    out = Path(args.out)
    for run_dir in map(Path, args.runs):
        try:
            meta = json.loads((run_dir / "metadata.json").read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"{run_dir} is not a run directory: {exc}") from exc
        if tables is not None and tables.config_hash != meta["config_hash"]:
            print(
                f"{run_dir}: outcomes from pipeline {meta['config_hash']!r}, "
                f"tables from {tables.config_hash!r}",
                file=sys.stderr,
            )
            return EXIT_HASH
        outcomes = read_outcomes(run_dir / "outcomes.csv", run_dir / "series.csv") if meta["n_trials"] else []
        summary = summarize(outcomes, meta["method"])
        doc = {
            "summary": summary,
            "config_hash": meta["config_hash"],
            "master_seed": meta["master_seed"],
            "dt": meta["dt"],
            "deltas": meta["deltas"],
        }
        if outcomes:
            ts = time_series(outcomes, meta["n_steps"], meta["dt"])
            doc["timeseries"] = {k: v.tolist() for k, v in ts.items()}
        if tables is not None and outcomes:
            doc["coverage"] = coverage_table(outcomes, tables.risk_aware)
        write_json(out / f"summary_{meta['method']}.json", doc)
        print(f"{meta['method']}: success rate {summary.get('success_rate', float('nan')):.3f}")
    return EXIT_OK


def cmd_report(args) -> int:
    files = []
    for p in map(Path, args.summaries):
        files.extend(sorted(p.glob("summary_*.json")) if p.is_dir() else [p])
    if not files:
        raise ConfigError("no summary files given")
    docs = [json.loads(f.read_text()) for f in files]
    order = {m: i for i, m in enumerate(METHODS)}
    docs.sort(key=lambda d: order.get(d["summary"]["method"], len(order)))
    summaries = [d["summary"] for d in docs]
    series, coverage = {}, []
    for d in docs:
        m = d["summary"]["method"]
        if "timeseries" in d:
            series[m] = d["timeseries"]
        for row in d.get("coverage", ()):
            coverage.append({"method": m, **row})
    hashes = sorted({d["config_hash"] for d in docs})
    written = write_report(
        args.out,
        summaries,
        series=series,
        coverage=coverage or None,
        deltas=docs[0]["deltas"],
        metadata={"config_hashes": hashes, "dt": docs[0]["dt"], "master_seed": docs[0]["master_seed"]},
    )
    print((Path(args.out) / "guarantee.txt").read_text().strip())
    for p in written:
        print(p)
    return EXIT_OK


def cmd_oracle(args) -> int:
    from ..oracles import run_qp_oracle, run_quantile_oracle

    seed = 0 if args.seed is None else args.seed
    n_qp = 1000 if args.trials is None else args.trials
    qp_rep = run_qp_oracle(n_qp, seed)
    q_rep = run_quantile_oracle(10 * n_qp, seed)
    print(
        f"qp: {qp_rep.n} instances ({qp_rep.n_feasible} feasible), verdict mismatches "
        f"{qp_rep.verdict_mismatches}, beaten by grid {qp_rep.beaten}, worst resolution gap "
        f"{qp_rep.max_resolution_gap:.2e}, worst KKT residual {qp_rep.max_kkt:.1e}, "
        f"{qp_rep.seconds:.1f}s"
    )
    print(
        f"quantile: {q_rep.n} multisets ({q_rep.n_sentinel} with k > n), "
        f"mismatches {q_rep.mismatches}"
    )
    if args.out:
        write_json(Path(args.out) / "oracle.json", {"qp": vars(qp_rep), "quantile": vars(q_rep)})
    return EXIT_OK if qp_rep.passed() and q_rep.mismatches == 0 else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="formation-cp",
        description="Risk-aware conformal safety filter for a leader-follower pair.",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, table=False, method=False):
        p.add_argument("--config", help="experiment config JSON (defaults if omitted)")
        p.add_argument("--seed", type=int, help="master seed override")
        p.add_argument("--trials", type=int, help="number of runs or trials")
        p.add_argument("--workers", type=int, help="worker processes")
        p.add_argument("--out", default=".", help="output directory")
        if table:
            p.add_argument("--table", required=True, help="directory written by `calibrate`")
        if method:
            p.add_argument("--method", help=f"one of {', '.join(METHODS)} or 'all'")

    p = sub.add_parser("calibrate", help="simulate calibration runs and fit quantile tables")
    common(p)
    p.add_argument("--no-records", action="store_true", help="skip writing per-step records")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("run", help="Monte Carlo evaluation of one or all methods")
    common(p, table=True, method=True)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("evaluate", help="summarise run directories")
    p.add_argument("runs", nargs="+", help="directories written by `run`")
    p.add_argument("--table", help="calibration directory, for coverage tables")
    p.add_argument("--out", default=".", help="output directory")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("report", help="render summaries as tables and time series")
    p.add_argument("summaries", nargs="+", help="summary files or directories written by `evaluate`")
    p.add_argument("--out", default=".", help="output directory")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("oracle", help="cross-check the QP solver and quantile against brute force")
    p.add_argument("--seed", type=int)
    p.add_argument("--trials", type=int, help="QP instances (quantile oracle runs 10x as many)")
    p.add_argument("--out", help="write oracle.json here")
    p.set_defaults(func=cmd_oracle)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except HashMismatchError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_HASH

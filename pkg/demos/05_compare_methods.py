"""
Comparing the four filters
==========================

nominal      zero margin everywhere
global_low   one radius calibrated on interior data at delta 0.45
global_high  one radius calibrated on boundary data at delta 0.01
risk_aware   one radius per risk group, blended across buffers

A reduced campaign (pass sizes on the command line) shows the trade-off:
too small a margin loses the leader, too large a margin makes the filter
infeasible.
"""

import sys
import warnings

from formation_cp.conformal import CalibrationWarning
from formation_cp.harness import METHODS, ExperimentConfig, run_calibration_campaign, run_evaluation, summarize
from formation_cp.harness.report import guarantee_line

n_cal = int(sys.argv[1]) if len(sys.argv) > 1 else 150
n_eval = int(sys.argv[2]) if len(sys.argv) > 2 else 60
cfg = ExperimentConfig()
with warnings.catch_warnings():
    warnings.simplefilter("ignore", CalibrationWarning)
    tables = run_calibration_campaign(cfg, n_cal).tables

summaries = []
for m in METHODS:
    s = summarize(run_evaluation(cfg, tables, n_eval, m), m)
    summaries.append(s)
    lo, hi = s["success_ci95"]
    print(
        f"{m:12s} success {s['success_rate']:.2f} [{lo:.2f}, {hi:.2f}]  mean margin {s['mean_margin']:.3f}  "
        f"failures {s['failure_modes']}"
    )
print(guarantee_line(cfg.taxonomy.deltas, summaries))

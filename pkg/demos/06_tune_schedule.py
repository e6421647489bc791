"""
Tuning the leader schedule
==========================

The default schedule was chosen by sweeping the rate of the long turn.  The
closed loop must dwell in all three risk groups, and the turn's steady-state
bearing should sit just inside the field of view so that the untightened
calibration loop spends time near, not beyond, the edge.
"""

import numpy as np

from formation_cp.conformal import constant_table
from formation_cp.harness import ExperimentConfig, ScheduleSpec
from formation_cp.harness.campaign import run_trials
from formation_cp.harness.simulate import CALIBRATION_STREAM

base = ExperimentConfig()
# last six seconds of the long turn
ends = np.cumsum([d for d, _, _ in base.schedule.segments])
window = slice(int((ends[3] - 6.0) / base.dt), int(ends[3] / base.dt))
print("turn rate  group dwell (1, 2, 3)  success  mean |phi| late in the turn")
for w in (0.12, 0.14, 0.155, 0.165, 0.175, 0.2):
    segs = tuple((d, v, w if om > 0.12 else om) for d, v, om in base.schedule.segments)
    cfg = base.with_(schedule=ScheduleSpec(segs))
    res = run_trials(cfg, constant_table(0.0), range(20), CALIBRATION_STREAM, "nominal", keep_records=True)
    frac = np.mean([o.group_fractions for o, _ in res], axis=0)
    ok = np.mean([o.success for o, _ in res])
    phi = np.mean([np.abs(r.x_true[window, 2]).mean() for _, r in res if r is not None and len(r) >= window.stop])
    print(f"  {w:.3f}     {np.round(frac, 2)}        {ok:.2f}     {phi:.3f}")

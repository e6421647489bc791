"""
One step of the safety filter
=============================

The filter projects the nominal tracking input onto the set of inputs that
keep the tightened barriers decreasing no faster than gamma * h.  The margin
comes from the risk group of the estimate and is blended linearly across a
buffer above each threshold.
"""

import numpy as np

from formation_cp import ControlInput, QuantileTable, RelativeState, RiskTaxonomy, safe_step, smooth_margin
from formation_cp.harness import ExperimentConfig

cfg = ExperimentConfig()
params = cfg.filter_params()
table = QuantileTable((0.72, 0.36, 0.15), RiskTaxonomy(), epsilon=0.12)
leader = ControlInput(0.3, 0.165)

print("  h     margin")
for h in np.linspace(0.0, 0.7, 15):
    print(f"{h:.3f}  {smooth_margin(h, table):.3f}")

for phi in (0.0, 0.3, 0.45, 0.6, 0.7):
    x_hat = RelativeState(1.2, 0.0, phi)
    u, diag = safe_step(x_hat, leader, table, params)
    print(
        f"phi_hat={phi:.2f} group {diag.group} margin {diag.margin:.3f} "
        f"u_nom=({diag.u_nom.v:+.3f}, {diag.u_nom.omega:+.3f}) -> u=({u.v:+.3f}, {u.omega:+.3f}) [{diag.status}]"
    )

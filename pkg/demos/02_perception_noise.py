"""
Synthetic perception errors
===========================

Bearing estimates come from a 21-class bin classifier: the true bearing is
quantised to a bin centre and shifted by an integer number of bins.  Errors
grow as the true state approaches the edge of the field of view, and they are
correlated in time.  The default "edge" offset law slips inwards by one bin
often and jumps outwards by several bins rarely.
"""

import numpy as np

from formation_cp import PerceptionModel, RelativeState, SafeSetParams, risk_indicator
from formation_cp.harness import ExperimentConfig
from formation_cp.perception import PerceptionStream, discrete_offset_pmf

model = ExperimentConfig().perception
safe = SafeSetParams()
print(f"bin width {model.bin_width:.4f} rad, half bin {model.bin_width / 2:.4f} rad")

for phi in (0.0, 0.4, 0.6, 0.7, 0.75):
    x = RelativeState(1.2, 0.0, phi)
    risk = risk_indicator(x, safe)
    stream = PerceptionStream(model, np.random.default_rng(0))
    e = np.array([np.subtract(x, stream(x, risk)) for _ in range(20000)])
    norm = np.linalg.norm(e, axis=1)
    print(
        f"phi={phi:.2f} risk={risk:.2f}  |e| mean {norm.mean():.3f}  99% {np.quantile(norm, 0.99):.3f}  "
        f"bearing error range [{e[:, 2].min():+.3f}, {e[:, 2].max():+.3f}]"
    )

for law in ("gauss", "laplace", "edge"):
    k, p = discrete_offset_pmf(2.0, law)
    keep = p > 0.005
    print(law.ljust(8), " ".join(f"{kk:+d}:{pp:.2f}" for kk, pp in zip(k[keep], p[keep])))

# time correlation: errors persist for a couple of seconds at 20 Hz
white = PerceptionModel(correlation=0.0)
for m in (white, model):
    s = PerceptionStream(m, np.random.default_rng(1))
    x = RelativeState(1.2, 0.0, 0.72)
    e = np.array([s(x, 0.04).phi - x.phi for _ in range(4000)])
    print(f"correlation={m.correlation}: lag-1 autocorrelation of bearing error {np.corrcoef(e[:-1], e[1:])[0, 1]:.2f}")

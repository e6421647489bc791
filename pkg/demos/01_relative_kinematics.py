"""
Relative kinematics and the tracking law
========================================

The follower sees its leader through a camera.  Its state relative to the
leader is the distance L, the line-of-sight bearing alpha measured from the
leader's heading, and the bearing phi of the leader in the camera image.

With exact state feedback the tracking law turns the (L, alpha) errors into
two decoupled first-order systems, while phi is left free and drifts with the
leader's turn rate.
"""

import math

from formation_cp import ControllerGains, ControlInput, KinematicsParams, RelativeState, nominal_control
from formation_cp.dynamics import integrate_feedback_step

kin = KinematicsParams()
gains = ControllerGains()
leader = ControlInput(0.3, 0.1)

x = RelativeState(1.6, 0.3, 0.0)
print("  t      L     alpha    phi    e_L/e_L(0)  exp(-k_L t)")
for k in range(81):
    t = k * 0.05
    if k % 10 == 0:
        ratio = (gains.L_d - x.L) / (gains.L_d - 1.6)
        print(f"{t:4.1f}  {x.L:.3f}  {x.alpha:+.3f}  {x.phi:+.3f}   {ratio:8.4f}    {math.exp(-gains.k_L * t):8.4f}")
    x = integrate_feedback_step(x, lambda s: nominal_control(s, leader, gains, kin), leader, kin, 0.05)

# phi settles where the follower's yaw rate matches the leader's; a faster
# turn pushes the leader further towards the edge of the image
for w in (0.0, 0.1, 0.165, 0.25):
    u_l = ControlInput(0.3, w)
    x = RelativeState(1.2, 0.0, 0.0)
    for _ in range(1200):
        x = integrate_feedback_step(x, lambda s: nominal_control(s, u_l, gains, kin), u_l, kin, 0.05)
    print(f"leader turn rate {w:.3f} rad/s -> steady bearing phi = {x.phi:+.3f} rad (edge at 0.76)")

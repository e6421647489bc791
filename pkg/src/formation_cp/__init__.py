"""Risk-aware conformal safety filtering for a camera-based leader-follower pair.

The follower keeps its leader inside the camera field of view with a control
barrier function filter whose safety margin is a group-conditional conformal
bound on the perception error, indexed by how close the estimated state is to
the edge of the safe set.
"""

from .barriers import SafeSetParams, barrier_values, lie_derivatives, risk_indicator, weighted_norm
from .conformal import (
    CalibrationError,
    QuantileTable,
    RiskTaxonomy,
    TrajectoryRecord,
    calibrate,
    conformal_quantile,
    smooth_margin,
)
from .controller import ControllerGains, nominal_control
from .dynamics import (
    ControlInput,
    DegenerateStateError,
    KinematicsParams,
    RelativeState,
    integrate_step,
    state_derivative,
)
from .perception import PerceptionModel, PerceptionStream, estimate
from .qp import InputBox, QpProblem, QpSolution, solve
from .safety_filter import FilterParams, safe_step

__version__ = "0.1.0"

__all__ = [
    "CalibrationError",
    "ControlInput",
    "ControllerGains",
    "DegenerateStateError",
    "FilterParams",
    "InputBox",
    "KinematicsParams",
    "PerceptionModel",
    "PerceptionStream",
    "QpProblem",
    "QpSolution",
    "QuantileTable",
    "RelativeState",
    "RiskTaxonomy",
    "SafeSetParams",
    "TrajectoryRecord",
    "barrier_values",
    "calibrate",
    "conformal_quantile",
    "estimate",
    "integrate_step",
    "lie_derivatives",
    "nominal_control",
    "risk_indicator",
    "safe_step",
    "smooth_margin",
    "solve",
    "state_derivative",
    "weighted_norm",
]

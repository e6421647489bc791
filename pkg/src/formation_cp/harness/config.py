"""Experiment configuration, canonical serialisation and the pipeline hash."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

from ..barriers import SafeSetParams
from ..conformal import RiskTaxonomy
from ..controller import ControllerGains
from ..dynamics import KinematicsParams
from ..perception import PerceptionModel
from ..qp import InputBox
from ..safety_filter import FilterParams
from .schedule import ScheduleSpec

METHODS = ("nominal", "global_low", "global_high", "risk_aware")

# fields that may differ between calibration and evaluation of one pipeline
_RUN_FIELDS = ("master_seed", "method", "n_trials", "n_calibration_runs", "workers")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class InitialStateRanges:
    L: tuple[float, float] = (0.6, 1.6)
    alpha: tuple[float, float] = (-0.2, 0.2)
    phi: tuple[float, float] = (-0.3, 0.3)


# Default scenario: time-correlated bearing errors with a long tail towards the
# nearer image edge, and a follower that cannot reverse.
DEFAULT_PERCEPTION = PerceptionModel(
    bin_spread1=2.0, tau_scale=0.3, correlation=0.9, offset_law="edge"
)
DEFAULT_BOX = InputBox(v_min=0.0)


@dataclass(frozen=True)
class ExperimentConfig:
    kinematics: KinematicsParams = KinematicsParams()
    safe_set: SafeSetParams = SafeSetParams()
    gains: ControllerGains = ControllerGains()
    perception: PerceptionModel = DEFAULT_PERCEPTION
    taxonomy: RiskTaxonomy = RiskTaxonomy()
    epsilon: float = 0.12
    norm_weights: tuple[float, float, float] = (1.0, 1.0, 1.0)
    box: InputBox = DEFAULT_BOX
    schedule: ScheduleSpec = ScheduleSpec()
    initial_state: InitialStateRanges = InitialStateRanges()
    dt: float = 0.05
    horizon: float = 40.0
    # global baselines: delta and the risk group whose data calibrates them
    global_low: tuple[float, int] = (0.45, 3)
    global_high: tuple[float, int] = (0.01, 1)
    master_seed: int = 0
    method: str = "risk_aware"
    n_trials: int = 100
    n_calibration_runs: int = 450
    workers: int = 1

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}; choose from {METHODS}")
        if not self.dt > 0 or not self.horizon > 0:
            raise ConfigError("dt and horizon must be positive")
        if self.n_trials < 0 or self.n_calibration_runs < 0:
            raise ConfigError("trial counts must be non-negative")

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon / self.dt))

    def filter_params(self, tighten: bool = True) -> FilterParams:
        return FilterParams(
            kinematics=self.kinematics,
            safe_set=self.safe_set,
            gains=self.gains,
            box=self.box,
            norm_weights=self.norm_weights,
            tighten=tighten,
        )

    def to_dict(self) -> dict:
        return _plain(asdict(self))

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def pipeline_hash(self) -> str:
        """Hash of everything that shapes the closed-loop distribution.

        Seeds, method and trial counts are excluded so that calibration and
        evaluation runs of one pipeline share a hash.
        """
        d = self.to_dict()
        for k in _RUN_FIELDS:
            d.pop(k)
        text = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    def with_(self, **changes) -> "ExperimentConfig":
        return replace(self, **changes)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        try:
            return _build(cls, d)
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from exc

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            d = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(d)


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


_NESTED = {
    "kinematics": KinematicsParams,
    "safe_set": SafeSetParams,
    "gains": ControllerGains,
    "perception": PerceptionModel,
    "taxonomy": RiskTaxonomy,
    "box": InputBox,
    "schedule": ScheduleSpec,
    "initial_state": InitialStateRanges,
}


def _build(cls, d: dict):
    known = {f.name: f for f in fields(cls)}
    unknown = set(d) - set(known)
    if unknown:
        raise ConfigError(f"unknown config keys for {cls.__name__}: {sorted(unknown)}")
    kwargs = {}
    for k, v in d.items():
        sub = _NESTED.get(k) if cls is ExperimentConfig else None
        if sub is not None:
            kwargs[k] = sub.from_dict(v) if hasattr(sub, "from_dict") else _build(sub, v)
        elif isinstance(v, list):
            kwargs[k] = _tuplify(v)
        else:
            kwargs[k] = v
    return cls(**kwargs)


def _tuplify(v):
    if isinstance(v, list):
        return tuple(_tuplify(x) for x in v)
    return v


def default_config(**changes) -> ExperimentConfig:
    return ExperimentConfig(**changes)


__all__ = [
    "METHODS",
    "ConfigError",
    "ExperimentConfig",
    "InitialStateRanges",
    "default_config",
]

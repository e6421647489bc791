"""Split conformal calibration over trajectories with a Mondrian risk taxonomy.

States are grouped by their barrier value ``h = min_l h_l``: group 1 is the
highest-risk band ``h < tau_1`` and group R the safest ``h >= tau_{R-1}``.
Each calibration trajectory contributes one score per group it visits (the
worst estimation error while in that group), and each group gets its own
miscoverage level.  A single-group taxonomy is ordinary global split CP.
"""

from __future__ import annotations

import bisect
import json
import math
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

SCHEMA_VERSION = 1


class CalibrationError(ValueError):
    """A group has no calibration scores at all."""

    def __init__(self, message: str, group: int | None = None):
        super().__init__(message)
        self.group = group


class CalibrationWarning(UserWarning):
    pass


@dataclass(frozen=True)
class RiskTaxonomy:
    """Ordered thresholds and per-group miscoverage levels.

    ``len(deltas) == len(thresholds) + 1``.  Groups are numbered from 1.
    """

    thresholds: tuple[float, ...] = (0.1, 0.45)
    deltas: tuple[float, ...] = (0.01, 0.10, 0.45)

    def __post_init__(self):
        th = tuple(float(t) for t in self.thresholds)
        de = tuple(float(d) for d in self.deltas)
        if any(b <= a for a, b in zip(th, th[1:])):
            raise ValueError(f"thresholds must be strictly increasing, got {th}")
        if len(de) != len(th) + 1:
            raise ValueError(f"need {len(th) + 1} deltas for {len(th)} thresholds, got {len(de)}")
        if any(not 0.0 < d < 1.0 for d in de):
            raise ValueError(f"deltas must lie in (0, 1), got {de}")
        object.__setattr__(self, "thresholds", th)
        object.__setattr__(self, "deltas", de)

    @property
    def n_groups(self) -> int:
        return len(self.deltas)

    @classmethod
    def single(cls, delta: float) -> "RiskTaxonomy":
        return cls(thresholds=(), deltas=(delta,))


def assign_group(h_min: float, tax: RiskTaxonomy) -> int:
    """Risk group of a barrier value; intervals are ``[tau_{r-1}, tau_r)``."""
    return bisect.bisect_right(tax.thresholds, h_min) + 1


@dataclass
class TrajectoryRecord:
    """Per-step log of one closed-loop run.

    Arrays are indexed by step.  ``risk`` is ``min_l h_l(x_hat)`` and ``group``
    is the taxonomy applied to it.  ``qp_status`` holds 1 for an optimal QP
    and 0 for an infeasible one.
    """

    dt: float
    x_true: np.ndarray  # (n, 3)
    x_hat: np.ndarray  # (n, 3)
    u_follower: np.ndarray  # (n, 2)
    u_leader: np.ndarray  # (n, 2)
    risk: np.ndarray  # (n,)
    group: np.ndarray  # (n,) int
    margin: np.ndarray  # (n,)
    qp_status: np.ndarray  # (n,) int

    def __post_init__(self):
        if len(self.x_true) == 0:
            raise ValueError("a trajectory record needs at least one step")

    def __len__(self):
        return len(self.x_true)

    def errors(self, norm_weights: Sequence[float]) -> np.ndarray:
        """Weighted estimation-error norm at every step."""
        e = np.asarray(self.x_true) - np.asarray(self.x_hat)
        return np.sqrt(e * e @ np.asarray(norm_weights, dtype=float))


def group_maxima(
    errors: np.ndarray, risk: np.ndarray, tax: RiskTaxonomy
) -> dict[int, float]:
    """Worst error inside each visited group of a single trajectory."""
    groups = np.searchsorted(np.asarray(tax.thresholds), risk, side="right") + 1
    out = {}
    for r in range(1, tax.n_groups + 1):
        mask = groups == r
        if mask.any():
            out[r] = float(errors[mask].max())
    return out


def trajectory_scores(
    records: Iterable[TrajectoryRecord],
    tax: RiskTaxonomy,
    norm_weights: Sequence[float] = (1.0, 1.0, 1.0),
) -> dict[int, np.ndarray]:
    """One nonconformity score per (trajectory, visited group).

    Groups are recomputed from each record's ``risk`` column under ``tax``,
    so the same records can be scored under different taxonomies.
    """
    if any(not w > 0 for w in norm_weights):
        raise ValueError("norm weights must be positive")
    buckets: dict[int, list[float]] = {r: [] for r in range(1, tax.n_groups + 1)}
    n = 0
    for rec in records:
        n += 1
        for r, s in group_maxima(rec.errors(norm_weights), np.asarray(rec.risk), tax).items():
            buckets[r].append(s)
    if n == 0:
        raise ValueError("no trajectory records given")
    return {r: np.asarray(v, dtype=float) for r, v in buckets.items()}


def conformal_quantile(scores: Sequence[float], delta: float) -> float:
    """The ``ceil((n + 1)(1 - delta))``-th smallest score.

    Returns ``inf`` when that rank exceeds ``n``: too few scores to certify
    ``1 - delta`` coverage.

    Raises
    ------
    CalibrationError
        If ``scores`` is empty.
    """
    s = np.sort(np.asarray(scores, dtype=float).ravel())
    n = s.size
    if n == 0:
        raise CalibrationError("cannot take a conformal quantile of no scores")
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    # guard the ceiling against (n+1)(1-delta) landing a hair above an integer
    k = math.ceil((n + 1) * (1.0 - delta) - 1e-9)
    if k > n:
        return math.inf
    return float(s[max(k, 1) - 1])


def _q_to_json(q: float):
    return "inf" if math.isinf(q) else q


def _q_from_json(q) -> float:
    return math.inf if q == "inf" else float(q)


@dataclass(frozen=True)
class QuantileTable:
    """Calibrated group radii plus everything needed to apply them online."""

    q_hat: tuple[float, ...]
    taxonomy: RiskTaxonomy
    epsilon: float = 0.12
    norm_weights: tuple[float, float, float] = (1.0, 1.0, 1.0)
    counts: tuple[int, ...] = ()
    config_hash: str = ""
    label: str = "risk_aware"
    warnings: tuple[str, ...] = field(default=())

    def __post_init__(self):
        q = tuple(float(v) for v in self.q_hat)
        object.__setattr__(self, "q_hat", q)
        object.__setattr__(self, "norm_weights", tuple(float(w) for w in self.norm_weights))
        object.__setattr__(self, "counts", tuple(int(c) for c in self.counts))
        object.__setattr__(self, "warnings", tuple(self.warnings))
        tax = self.taxonomy
        if len(q) != tax.n_groups:
            raise ValueError(f"{len(q)} quantiles for {tax.n_groups} groups")
        if any(v < 0 or math.isnan(v) for v in q):
            raise ValueError(f"quantiles must be non-negative, got {q}")
        if tax.n_groups > 1:
            if not self.epsilon > 0.0:
                raise ValueError("transition buffer width must be positive")
            gaps = np.diff(tax.thresholds)
            if gaps.size and self.epsilon > gaps.min():
                raise ValueError(
                    f"transition buffers overlap: epsilon={self.epsilon} exceeds the "
                    f"smallest threshold gap {gaps.min():.4g}"
                )

    @property
    def is_monotone(self) -> bool:
        return all(a >= b for a, b in zip(self.q_hat, self.q_hat[1:]))

    @property
    def finite(self) -> bool:
        return all(math.isfinite(v) for v in self.q_hat)

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "label": self.label,
            "thresholds": list(self.taxonomy.thresholds),
            "deltas": list(self.taxonomy.deltas),
            "quantiles": [_q_to_json(v) for v in self.q_hat],
            "epsilon": self.epsilon,
            "norm_weights": list(self.norm_weights),
            "counts": list(self.counts),
            "config_hash": self.config_hash,
            "warnings": list(self.warnings),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "QuantileTable":
        if d.get("schema_version", SCHEMA_VERSION) != SCHEMA_VERSION:
            raise ValueError(f"unsupported quantile table schema {d['schema_version']}")
        return cls(
            q_hat=tuple(_q_from_json(v) for v in d["quantiles"]),
            taxonomy=RiskTaxonomy(tuple(d["thresholds"]), tuple(d["deltas"])),
            epsilon=float(d["epsilon"]),
            norm_weights=tuple(d["norm_weights"]),
            counts=tuple(d.get("counts", ())),
            config_hash=d.get("config_hash", ""),
            label=d.get("label", "risk_aware"),
            warnings=tuple(d.get("warnings", ())),
        )

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def loads(cls, text: str) -> "QuantileTable":
        return cls.from_dict(json.loads(text))

    def save(self, path) -> None:
        Path(path).write_text(self.dumps())

    @classmethod
    def load(cls, path) -> "QuantileTable":
        return cls.loads(Path(path).read_text())


def table_from_scores(
    scores: dict[int, np.ndarray],
    tax: RiskTaxonomy,
    epsilon: float = 0.12,
    norm_weights: Sequence[float] = (1.0, 1.0, 1.0),
    config_hash: str = "",
    label: str = "risk_aware",
) -> QuantileTable:
    q, counts, notes = [], [], []
    for r in range(1, tax.n_groups + 1):
        s = scores.get(r, np.empty(0))
        if len(s) == 0:
            raise CalibrationError(
                f"risk group {r} was never visited by a calibration trajectory; "
                "run a larger calibration campaign or merge groups",
                group=r,
            )
        qr = conformal_quantile(s, tax.deltas[r - 1])
        if math.isinf(qr):
            need = math.ceil(1.0 / tax.deltas[r - 1]) - 1
            notes.append(
                f"group {r}: {len(s)} scores cannot certify delta={tax.deltas[r - 1]} "
                f"(needs at least {need}); quantile is infinite"
            )
        q.append(qr)
        counts.append(len(s))
    table = QuantileTable(
        q_hat=tuple(q),
        taxonomy=tax,
        epsilon=epsilon,
        norm_weights=tuple(norm_weights),
        counts=tuple(counts),
        config_hash=config_hash,
        label=label,
        warnings=tuple(notes),
    )
    if not table.is_monotone:
        msg = f"group quantiles {table.q_hat} do not shrink with decreasing risk"
        table = replace(table, warnings=table.warnings + (msg,))
    for msg in table.warnings:
        warnings.warn(msg, CalibrationWarning, stacklevel=3)
    return table


def calibrate(
    records: Sequence[TrajectoryRecord],
    tax: RiskTaxonomy,
    epsilon: float = 0.12,
    norm_weights: Sequence[float] = (1.0, 1.0, 1.0),
    config_hash: str = "",
) -> QuantileTable:
    """Risk-aware group quantiles from calibration trajectories.

    Non-monotone quantiles are kept as calibrated and reported through
    ``QuantileTable.warnings``.

    Raises
    ------
    CalibrationError
        If some group is never visited.
    """
    scores = trajectory_scores(records, tax, norm_weights)
    return table_from_scores(scores, tax, epsilon, norm_weights, config_hash)


def calibrate_global(
    records: Sequence[TrajectoryRecord],
    delta: float,
    region: tuple[RiskTaxonomy, int] | None = None,
    norm_weights: Sequence[float] = (1.0, 1.0, 1.0),
    config_hash: str = "",
    label: str = "global",
) -> QuantileTable:
    """Single-radius table, i.e. ordinary split CP.

    With ``region=None`` every step counts and each trajectory's score is its
    worst error overall.  With ``region=(tax, r)`` only steps that ``tax``
    places in group ``r`` are scored, which yields the optimistic (interior
    data) and pessimistic (boundary data) global baselines.
    """
    if region is None:
        scores = trajectory_scores(records, RiskTaxonomy.single(delta), norm_weights)[1]
    else:
        tax, r = region
        scores = trajectory_scores(records, tax, norm_weights)[r]
    return table_from_scores(
        {1: scores}, RiskTaxonomy.single(delta), 0.12, norm_weights, config_hash, label
    )


def constant_table(margin: float, label: str = "nominal", config_hash: str = "") -> QuantileTable:
    """A table that always returns ``margin``; ``0`` gives the untightened filter."""
    return QuantileTable(
        q_hat=(float(margin),),
        taxonomy=RiskTaxonomy.single(0.5),
        label=label,
        config_hash=config_hash,
    )


def smooth_margin(h_min: float, table: QuantileTable) -> float:
    """Continuous margin over risk groups.

    Inside the buffer ``[tau_r, tau_r + epsilon]`` the margin moves linearly
    from ``q_r`` (higher risk) to ``q_{r+1}``; elsewhere it is the active
    group's radius.  Infinite radii propagate.
    """
    q = table.q_hat
    th = table.taxonomy.thresholds
    eps = table.epsilon
    for r, tau in enumerate(th):
        if tau <= h_min <= tau + eps:
            lo, hi = q[r], q[r + 1]
            t = (h_min - tau) / eps
            if t >= 1.0:
                return hi
            if math.isinf(lo) or math.isinf(hi):
                return math.inf
            return lo + (hi - lo) * t
    return q[bisect.bisect_right(th, h_min)]


def smooth_margin_lipschitz(table: QuantileTable) -> float:
    """Lipschitz constant of :func:`smooth_margin` in ``h``."""
    q = table.q_hat
    if len(q) < 2:
        return 0.0
    return max(abs(b - a) for a, b in zip(q, q[1:])) / table.epsilon

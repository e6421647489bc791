"""Synthetic stand-in for a camera + classifier relative-state estimator.

Bearing is estimated the way a bin classifier would: the true bearing is
quantised to the nearest bin centre and then shifted by a random integer number
of bins.  Distance gets additive Gaussian noise and the leader bearing a small
Gaussian perturbation.  Noise grows as the *true* state approaches the edge of
the safe set, which gives the heteroscedastic, formation-dependent error
structure that risk-aware calibration is meant to exploit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dynamics import RelativeState, StateEstimate


@dataclass(frozen=True)
class PerceptionModel:
    """Noise model parameters.

    Attributes
    ----------
    n_bins : int
        Number of bearing classes spanning the field of view; must be odd.
    fov : float
        Full horizontal field of view (2 * psi_max), radians.
    sigma_L0, sigma_L1 : float
        Distance noise std at the interior and its growth at the boundary, m.
    bin_spread0, bin_spread1 : float
        Std of the bearing-bin offset, in bins, and its growth at the boundary.
    sigma_alpha : float
        Std of the leader-bearing perturbation, radians.
    tau_scale : float
        Risk value at and above which the noise stays at its interior level.
    correlation : float
        Step-to-step correlation of the error drivers, in [0, 1).
    offset_law : {"gauss", "laplace"}
        Shape of the integer bin-offset distribution.
    seed : int
        Default seed used by :meth:`rng`.
    """

    n_bins: int = 21
    fov: float = 1.52
    sigma_L0: float = 0.02
    sigma_L1: float = 0.10
    bin_spread0: float = 0.3
    bin_spread1: float = 1.2
    sigma_alpha: float = 0.01
    tau_scale: float = 0.45
    correlation: float = 0.0
    offset_law: str = "gauss"
    seed: int = 0

    def __post_init__(self):
        if self.n_bins < 1 or self.n_bins % 2 == 0:
            raise ValueError(f"n_bins must be a positive odd integer, got {self.n_bins}")
        if not self.fov > 0:
            raise ValueError("fov must be positive")
        if self.offset_law not in OFFSET_LAWS:
            raise ValueError(f"offset_law must be one of {OFFSET_LAWS}")
        if not 0.0 <= self.correlation < 1.0:
            raise ValueError("correlation must lie in [0, 1)")
        if not self.tau_scale > 0:
            raise ValueError("tau_scale must be positive")
        for name in ("sigma_L0", "sigma_L1", "bin_spread0", "bin_spread1", "sigma_alpha"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")

    @property
    def bin_width(self) -> float:
        return self.fov / self.n_bins

    def rng(self, trial_index: int = 0) -> np.random.Generator:
        return np.random.default_rng(np.random.SeedSequence([self.seed, trial_index]))


def boundary_proximity(risk: float, tau_scale: float) -> float:
    """``clamp(1 - risk / tau_scale, 0, 1)``: 0 deep inside, 1 at or past the boundary."""
    return min(1.0, max(0.0, 1.0 - risk / tau_scale))


def bin_index(phi: float, model: PerceptionModel) -> int:
    """Index of the nearest bin centre; 0 is the centre bin.

    The lattice extends past the field of view, so bearings outside it still
    map to a (virtual) bin.
    """
    return int(round(phi / model.bin_width))


# Zero-mean integer offset laws.  "gauss": P(k) ~ exp(-k^2 / (2 s^2));
# "laplace": P(k) ~ exp(-|k| / s); "edge": P(k) ~ exp(-k / s) for k >= 0 and
# c exp(k / EDGE_INWARD_SCALE) for k < 0, with c chosen for zero mean, so that
# positive offsets are rare but long and negative ones frequent but short.
# The scale s is solved from a variance table so that the offset has exactly
# the requested standard deviation.
OFFSET_LAWS = ("gauss", "laplace", "edge")
EDGE_INWARD_SCALE = 0.5
_SCALE_GRID = np.concatenate([np.linspace(0.05, 1.0, 400), np.linspace(1.0025, 40.0, 4000)])


def _law_weights(law: str, scale: float) -> tuple[np.ndarray, np.ndarray]:
    kmax = int(math.ceil((10.0 if law == "gauss" else 40.0) * scale)) + 2
    k = np.arange(-kmax, kmax + 1)
    if law == "gauss":
        w = np.exp(-0.5 * (k / scale) ** 2)
    elif law == "laplace":
        w = np.exp(-np.abs(k) / scale)
    else:
        w = np.where(k >= 0, np.exp(-np.maximum(k, 0) / scale), 0.0)
        inward = np.where(k < 0, np.exp(np.minimum(k, 0) / EDGE_INWARD_SCALE), 0.0)
        w = w + inward * (np.sum(k * w) / -np.sum(k * inward))
    return k, w / w.sum()


def _variance(law: str, scale: float) -> float:
    k, p = _law_weights(law, scale)
    return float(np.sum(k * k * p))


_VAR_GRID = {law: np.array([_variance(law, s) for s in _SCALE_GRID]) for law in OFFSET_LAWS}


def discrete_offset_pmf(std: float, law: str = "gauss") -> tuple[np.ndarray, np.ndarray]:
    """Support and probabilities of the zero-mean integer bin offset."""
    if law not in OFFSET_LAWS:
        raise ValueError(f"unknown offset law {law!r}")
    if std <= 0.0:
        return np.array([0]), np.array([1.0])
    scale = float(np.interp(std * std, _VAR_GRID[law], _SCALE_GRID))
    return _law_weights(law, scale)


def offset_from_uniform(std: float, u: float, law: str = "gauss") -> int:
    """Inverse CDF of the bin-offset law at ``u`` in (0, 1)."""
    if std <= 0.0:
        return 0
    k, p = discrete_offset_pmf(std, law)
    i = int(np.searchsorted(np.cumsum(p), u, side="right"))
    return int(k[min(i, len(k) - 1)])


def sample_offset(std: float, rng: np.random.Generator, law: str = "gauss") -> int:
    return offset_from_uniform(std, rng.random(), law)


def _normal_cdf(z: float) -> float:
    return 0.5 * (1.0 + math.erf(z / math.sqrt(2.0)))


def estimate(
    x_true: RelativeState,
    model: PerceptionModel,
    risk: float,
    rng: np.random.Generator,
    latent: tuple[float, float, float] | None = None,
) -> StateEstimate:
    """Draw one relative-state estimate.

    Parameters
    ----------
    x_true : RelativeState
        Ground-truth relative state.
    model : PerceptionModel
    risk : float
        Barrier value ``min_l h_l(x_true)`` of the true state.
    rng : numpy.random.Generator
        Per-trial stream; the same stream and inputs give the same estimates.
    latent : tuple of three floats, optional
        Standard-normal drivers for the (L, alpha, phi) errors.  Drawn fresh
        from ``rng`` when omitted; :class:`PerceptionStream` supplies
        time-correlated ones.
    """
    if latent is None:
        latent = tuple(rng.standard_normal(3))
    zL, za, zp = latent
    prox = boundary_proximity(risk, model.tau_scale)
    w = model.bin_width

    spread = model.bin_spread0 + model.bin_spread1 * prox
    offset = offset_from_uniform(spread, _normal_cdf(zp), model.offset_law)
    if model.offset_law == "edge" and x_true.phi < 0.0:
        offset = -offset  # long tail points at the nearer image edge
    phi_hat = (bin_index(x_true.phi, model) + offset) * w

    sigma_L = model.sigma_L0 + model.sigma_L1 * prox
    L_hat = x_true.L + sigma_L * zL
    if not L_hat > 0.0:
        # truncated Gaussian: redraw until positive
        for _ in range(64):
            L_hat = x_true.L + sigma_L * rng.standard_normal()
            if L_hat > 0.0:
                break
        else:
            L_hat = max(x_true.L, 1e-6)

    alpha_hat = x_true.alpha + model.sigma_alpha * za
    return StateEstimate(L_hat, alpha_hat, phi_hat)


class PerceptionStream:
    """Estimator for one trial whose errors are AR(1)-correlated in time.

    Each error channel is driven by a latent ``z_k = rho z_{k-1} +
    sqrt(1 - rho^2) xi_k`` with ``xi_k`` standard normal, so every step keeps
    exactly the marginal law of :func:`estimate`; ``rho = 0`` gives
    independent draws.
    """

    def __init__(self, model: PerceptionModel, rng: np.random.Generator):
        self.model = model
        self.rng = rng
        self._z: np.ndarray | None = None
        rho = model.correlation
        self._keep, self._fresh = rho, math.sqrt(1.0 - rho * rho)

    def __call__(self, x_true: RelativeState, risk: float) -> StateEstimate:
        xi = self.rng.standard_normal(3)
        if self._z is None:
            self._z = xi
        else:
            self._z = self._keep * self._z + self._fresh * xi
        return estimate(x_true, self.model, risk, self.rng, tuple(self._z))

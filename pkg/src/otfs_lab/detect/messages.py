"""Gaussian message types and the extrinsic (Gaussian division) update."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

#: clamp window for extrinsic variances.  The division formulas are singular
#: when posterior and prior variances coincide; capping is standard practice
#: in turbo-style receivers.
VAR_FLOOR = 1e-12
VAR_CAP = 1e6


@dataclass(frozen=True)
class GaussianMessage:
    """Mean vector plus per-entry variance (diagonal covariance)."""

    mean: np.ndarray
    variance: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.complex128)
        variance = np.asarray(self.variance, dtype=float)
        if variance.ndim == 0:
            variance = np.full(mean.shape, float(variance))
        if mean.shape != variance.shape:
            raise ValueError("mean and variance must have the same shape")
        if np.any(variance <= 0):
            raise ValueError("variances must be positive")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "variance", variance)

    def __len__(self) -> int:
        return len(self.mean)


@dataclass(frozen=True)
class DetectionResult:
    """Hard decisions plus per-symbol posterior rows.

    ``posteriors[i]`` sums to one; ``hard[i]`` is its argmax (lowest
    constellation index wins ties).  ``per_iteration_mse`` is populated when
    the detector was given the transmitted symbols to track convergence.
    """

    hard: np.ndarray
    posteriors: np.ndarray
    iterations_run: int
    per_iteration_mse: list[float] = field(default_factory=list)

    def __post_init__(self):
        hard = np.asarray(self.hard, dtype=int)
        post = np.asarray(self.posteriors, dtype=float)
        if post.ndim != 2 or len(hard) != post.shape[0]:
            raise ValueError("posteriors must be one row per symbol")
        if np.any(np.abs(post.sum(axis=1) - 1.0) > 1e-9):
            raise ValueError("posterior rows must sum to 1")
        object.__setattr__(self, "hard", hard)
        object.__setattr__(self, "posteriors", post)


@dataclass(frozen=True)
class StateTrace:
    """Predicted per-iteration variances of the cross-domain recursion.

    ``v_td[l]`` is the TD-side input variance entering iteration ``l+1``
    (``v_td[0] = 1`` is the cold start), ``v_dd[l]`` the DD-side input
    variance during iteration ``l+1`` and ``eta_dd[l]`` its reciprocal.
    """

    v_td: list[float]
    v_dd: list[float]
    eta_dd: list[float]

    def __post_init__(self):
        if len(self.v_dd) != len(self.eta_dd):
            raise ValueError("v_dd and eta_dd must be equally long")
        for v, eta in zip(self.v_dd, self.eta_dd):
            if v <= 0 or abs(eta * v - 1.0) > 1e-9:
                raise ValueError("eta_dd must be the reciprocal of v_dd")


def extrinsic(
    post: GaussianMessage,
    prior: GaussianMessage,
    var_floor: float = VAR_FLOOR,
    var_cap: float = VAR_CAP,
) -> GaussianMessage:
    """Entrywise Gaussian division: remove the prior from a posterior.

    ``1/v_e = 1/v_p - 1/v_a`` and ``m_e = v_e (m_p/v_p - m_a/v_a)``.  Entries
    where the posterior gained nothing (``v_p >= v_a``) fall back to the
    posterior mean with the capped variance.
    """
    v_p, v_a = post.variance, prior.variance
    gained = v_p < v_a
    with np.errstate(divide="ignore", invalid="ignore"):
        v_e = 1.0 / (1.0 / v_p - 1.0 / v_a)
        m_e = v_e * (post.mean / v_p - prior.mean / v_a)
    v_e = np.where(gained, v_e, var_cap)
    m_e = np.where(gained, m_e, post.mean)
    v_e = np.clip(v_e, var_floor, var_cap)
    return GaussianMessage(m_e, v_e)

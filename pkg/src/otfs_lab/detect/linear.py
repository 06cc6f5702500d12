"""Linear MMSE estimation in the time domain, plus MMSE and MRC baselines."""

from __future__ import annotations

import numpy as np

from otfs_lab.detect.messages import DetectionResult, GaussianMessage
from otfs_lab.modem import Constellation


def lmmse_estimate(
    r: np.ndarray,
    h: np.ndarray,
    prior: GaussianMessage,
    n0: float,
) -> GaussianMessage:
    """Posterior mean/variance of ``z`` from ``r = H z + w`` with a diagonal
    Gaussian prior on ``z`` and white noise of power ``n0``.

    Off-diagonal posterior covariance is discarded: only the per-entry
    variances are returned.
    """
    r = np.asarray(r, dtype=np.complex128)
    h = np.asarray(h, dtype=np.complex128)
    v_a = prior.variance
    s = (h * v_a) @ h.conj().T
    s[np.diag_indices_from(s)] += n0
    resid = r - h @ prior.mean
    m_p = prior.mean + v_a * (h.conj().T @ np.linalg.solve(s, resid))
    hs = np.linalg.solve(s, h)
    quad = np.einsum("ij,ij->j", h.conj(), hs).real
    v_p = v_a - v_a**2 * quad
    v_p = np.maximum(v_p, 1e-15)
    return GaussianMessage(m_p, v_p)


class TdLmmseSolver:
    """Repeated-use MMSE estimator for a fixed channel matrix.

    Precomputes the eigen-decomposition of ``G = H H^H`` so that every call
    with a scaled-identity prior costs matrix-vector work only.  Used by the
    cross-domain detector, whose fed-back prior covariance is by construction
    a scalar times the identity.
    """

    def __init__(self, h: np.ndarray, n0: float):
        h = np.asarray(h, dtype=np.complex128)
        if h.ndim != 2 or h.shape[0] != h.shape[1]:
            raise ValueError("channel matrix must be square")
        self.h = h
        self.n0 = float(n0)
        g = h @ h.conj().T
        self.eigenvalues, self.u = np.linalg.eigh(g)
        self.eigenvalues = np.maximum(self.eigenvalues, 0.0)
        b = self.u.conj().T @ h
        self._b2 = (b.real**2 + b.imag**2)

    @property
    def mn(self) -> int:
        return self.h.shape[0]

    def estimate(self, r: np.ndarray, prior_mean: np.ndarray, prior_var: float) -> GaussianMessage:
        """MMSE update for a prior with scalar variance ``prior_var``."""
        v = float(prior_var)
        denom = v * self.eigenvalues + self.n0
        if np.any(denom <= 0):
            raise np.linalg.LinAlgError("singular system: zero noise on a rank-deficient channel")
        resid = r - self.h @ prior_mean
        t = self.u.conj().T @ resid
        m_p = prior_mean + v * (self.h.conj().T @ (self.u @ (t / denom)))
        quad = (1.0 / denom) @ self._b2
        v_p = np.maximum(v - v**2 * quad, 1e-15)
        return GaussianMessage(m_p, v_p)

    def posterior_variance_average(self, prior_var: float) -> float:
        """Average posterior variance for a scalar prior, from the spectrum
        of ``G`` alone (no data needed)."""
        v = float(prior_var)
        lam = self.eigenvalues
        return v - (v / self.mn) * np.sum(v * lam / (v * lam + self.n0))


def _soft_to_result(
    soft: np.ndarray, noise_var: np.ndarray, constellation: Constellation
) -> DetectionResult:
    d2 = np.abs(soft[:, None] - constellation.points[None, :]) ** 2
    loglik = -d2 / noise_var[:, None]
    loglik -= loglik.max(axis=1, keepdims=True)
    post = np.exp(loglik)
    post /= post.sum(axis=1, keepdims=True)
    hard = np.argmax(post, axis=1)
    return DetectionResult(hard, post, iterations_run=1)


def mmse_baseline(
    y: np.ndarray, h: np.ndarray, n0: float, constellation: Constellation
) -> DetectionResult:
    """One-shot MMSE equalization with a unit-power symbol prior, then
    per-symbol slicing."""
    mn = h.shape[0]
    prior = GaussianMessage(np.zeros(mn, dtype=np.complex128), np.ones(mn))
    msg = lmmse_estimate(y, h, prior, n0)
    return _soft_to_result(msg.mean, msg.variance, constellation)


def mrc_baseline(
    y: np.ndarray, h: np.ndarray, constellation: Constellation, n0: float = 1e-12
) -> DetectionResult:
    """Matched-filter combining: ``H^H y`` normalized per symbol, then
    slicing.  ``n0`` only shapes the reported posteriors."""
    h = np.asarray(h, dtype=np.complex128)
    col_energy = np.sum(np.abs(h) ** 2, axis=0)
    if np.any(col_energy == 0):
        raise np.linalg.LinAlgError("channel column with zero energy")
    soft = (h.conj().T @ y) / col_energy
    return _soft_to_result(soft, n0 / col_energy, constellation)

"""Cross-domain iterative detection.

One iteration alternates a TD-domain linear MMSE de-correlation step with a
DD-domain symbol-by-symbol de-noising step, exchanging extrinsic Gaussian
messages through the unitary DD<->TD kernels.  The TD side sees the channel
as sparse; the DD side sees the constellation constraint.
"""

from __future__ import annotations

import logging

import numpy as np

from otfs_lab.channel import PathSet, td_effective_channel
from otfs_lab.detect.linear import TdLmmseSolver
from otfs_lab.detect.messages import (
    VAR_CAP,
    VAR_FLOOR,
    DetectionResult,
    GaussianMessage,
    extrinsic,
)
from otfs_lab.modem import Constellation
from otfs_lab.transforms import FrameParams, dd_to_td_vec, td_to_dd_vec

logger = logging.getLogger(__name__)


def dd_symbol_detect(
    m_x_a: np.ndarray, v_z_a: np.ndarray, constellation: Constellation
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-symbol posteriors from noisy DD-domain symbol estimates.

    The likelihood of point ``a`` at entry ``k`` is proportional to
    ``exp((2 Re{conj(a) m[k]} - |a|^2) / v[k])``; the observation's own
    energy term cancels in the normalization.  Returns the posterior rows
    and their means/variances.
    """
    m_x_a = np.asarray(m_x_a, dtype=np.complex128)
    v_z_a = np.broadcast_to(np.asarray(v_z_a, dtype=float), m_x_a.shape)
    pts = constellation.points
    metric = 2.0 * np.real(np.conj(pts)[None, :] * m_x_a[:, None]) - np.abs(pts)[None, :] ** 2
    loglik = metric / v_z_a[:, None]
    loglik -= loglik.max(axis=1, keepdims=True)
    post = np.exp(loglik)
    post /= post.sum(axis=1, keepdims=True)
    mean = post @ pts
    var = post @ (np.abs(pts) ** 2) - np.abs(mean) ** 2
    return post, mean, np.maximum(var, VAR_FLOOR)


def cross_domain_detect(
    r: np.ndarray,
    channel: PathSet | np.ndarray | TdLmmseSolver,
    constellation: Constellation,
    n0: float,
    iterations: int = 5,
    frame: FrameParams | None = None,
    true_symbols: np.ndarray | None = None,
) -> DetectionResult:
    """Iterative TD-MMSE / DD-slicing detection of a received TD vector.

    ``channel`` may be a path set, a dense TD channel matrix, or a prebuilt
    :class:`TdLmmseSolver` (to amortize its factorization across frames).
    When ``true_symbols`` (the transmitted DD vector) is given, the TD-domain
    mean-squared error of the fed-back estimate is recorded per iteration.

    Extrinsic information is always formed on the TD side; the DD detector
    is component-wise and has none of its own to offer.  The DD posterior
    variances are averaged to a scalar before the feedback division, which
    keeps the fed-back prior covariance a scaled identity.
    """
    if iterations < 1:
        raise ValueError("need at least one iteration")
    if isinstance(channel, PathSet):
        solver = TdLmmseSolver(td_effective_channel(channel).matrix, n0)
        frame = channel.frame
    elif isinstance(channel, TdLmmseSolver):
        solver = channel
    else:
        solver = TdLmmseSolver(np.asarray(channel), n0)
    if frame is None:
        raise ValueError("pass frame= (the DD/TD grid split) unless channel is a PathSet")
    mn = solver.mn
    z_true = dd_to_td_vec(true_symbols, frame) if true_symbols is not None else None

    m_a = np.zeros(mn, dtype=np.complex128)
    v_a = 1.0
    post = None
    mse_trace: list[float] = []
    for _ in range(iterations):
        td_post = solver.estimate(r, m_a, v_a)
        td_prior = GaussianMessage(m_a, np.full(mn, v_a))
        ext_td = extrinsic(td_post, td_prior)
        m_x_a = td_to_dd_vec(ext_td.mean, frame)
        post, m_x_p, v_x_p = dd_symbol_detect(m_x_a, ext_td.variance, constellation)
        m_z_p = dd_to_td_vec(m_x_p, frame)
        v_p_avg = float(np.mean(v_x_p))
        v_a_avg = float(np.mean(ext_td.variance))
        ext_dd = extrinsic(
            GaussianMessage(m_z_p, np.full(mn, v_p_avg)),
            GaussianMessage(ext_td.mean, np.full(mn, v_a_avg)),
        )
        m_a = ext_dd.mean
        v_a = float(np.mean(ext_dd.variance))
        v_a = min(max(v_a, VAR_FLOOR), VAR_CAP)
        if z_true is not None:
            mse_trace.append(float(np.mean(np.abs(m_a - z_true) ** 2)))
    hard = np.argmax(post, axis=1)
    return DetectionResult(hard, post, iterations_run=iterations, per_iteration_mse=mse_trace)

"""Pairwise-error-probability machinery for coded DD-domain transmission.

An error sequence ``e`` projects onto each channel path through a unitary
per-path operator; the Gram matrix of those projections (the codeword
difference matrix) carries everything the PEP bounds need.  Its rank is the
diversity order, and functions of its spectrum give the coding gain, the
Rayleigh/Rician unconditional bounds, and the large-path-count limit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from otfs_lab.transforms import FrameParams, dd_to_td_vec, td_to_dd_vec

#: relative eigenvalue threshold for rank counting, scaled by the matrix's
#: natural magnitude d_E^2 * P.
RANK_TOL = 1e-9


@dataclass(frozen=True)
class CodewordDifferenceMatrix:
    """Hermitian PSD Gram matrix of per-path projections of an error vector."""

    omega: np.ndarray
    eigenvalues: np.ndarray  # descending, clamped at zero
    rank: int
    d_e2: float
    p: int

    @classmethod
    def from_omega(cls, omega: np.ndarray, d_e2: float) -> "CodewordDifferenceMatrix":
        omega = np.asarray(omega, dtype=np.complex128)
        p = omega.shape[0]
        if np.max(np.abs(omega - omega.conj().T)) > 1e-10 * max(d_e2, 1.0):
            raise ValueError("codeword difference matrix must be Hermitian")
        lam = np.linalg.eigvalsh((omega + omega.conj().T) / 2.0)[::-1]
        lam = np.maximum(lam, 0.0)
        rank = int(np.sum(lam > RANK_TOL * d_e2 * p))
        return cls(omega, lam, rank, float(d_e2), p)


class ShiftPhasePrecoder:
    """Unitary symbol-wise precoder: phase ramp, cyclic shift, phase ramp.

    ``W x = D^a . shift_s . D^b . x`` with ``D = diag(gamma^0..gamma^{MN-1})``
    and ``gamma = exp(2j pi / MN)``; one non-zero per row and column, so
    ``W W^H = I`` exactly.
    """

    def __init__(self, mn: int, phase_pre: float = 0.0, shift: int = 0, phase_post: float = 0.0):
        self.mn = mn
        self.phase_pre = float(phase_pre)
        self.shift = int(shift) % mn
        self.phase_post = float(phase_post)
        idx = np.arange(mn)
        self._ramp_pre = np.exp(2j * np.pi * self.phase_pre * idx / mn)
        self._ramp_post = np.exp(2j * np.pi * self.phase_post * idx / mn)

    def apply(self, x: np.ndarray) -> np.ndarray:
        return self._ramp_pre * np.roll(self._ramp_post * x, self.shift)

    def apply_hermitian(self, x: np.ndarray) -> np.ndarray:
        return self._ramp_post.conj() * np.roll(self._ramp_pre.conj() * x, -self.shift)

    def as_matrix(self) -> np.ndarray:
        mn = self.mn
        shift_mat = np.zeros((mn, mn), dtype=np.complex128)
        shift_mat[(np.arange(mn) + self.shift) % mn, np.arange(mn)] = 1.0
        return (self._ramp_pre[:, None] * shift_mat) * self._ramp_post[None, :]

    def __matmul__(self, x):  # convenience for tests
        return self.apply(np.asarray(x, dtype=np.complex128))


def identity_precoder(mn: int) -> ShiftPhasePrecoder:
    return ShiftPhasePrecoder(mn)


def path_operator_apply(
    e: np.ndarray,
    delay: float,
    doppler: float,
    frame: FrameParams,
    precoder: ShiftPhasePrecoder | None = None,
) -> np.ndarray:
    """Apply one path's DD-domain projection operator to a vector.

    The operator is the unitary conjugation of a cyclic delay and a Doppler
    phase ramp (optionally preceded by a symbol-wise precoder) into the DD
    domain; everything is applied factor by factor in O(MN log N).
    """
    if delay != int(delay):
        raise ValueError("delay taps must be integers")
    mn = frame.mn
    v = dd_to_td_vec(np.asarray(e, dtype=np.complex128), frame)
    if precoder is not None:
        v = precoder.apply(v)
    idx = np.arange(mn)
    v = np.exp(2j * np.pi * doppler * idx / mn) * v
    v = np.roll(v, int(delay))
    return td_to_dd_vec(v, frame)


def codeword_difference_matrix(
    e: np.ndarray,
    omega_tau: np.ndarray,
    omega_nu: np.ndarray,
    frame: FrameParams,
    precoders: list[ShiftPhasePrecoder] | None = None,
) -> CodewordDifferenceMatrix:
    """Gram matrix ``Omega[i, j] = (Xi_i e)^H (Xi_j e)`` over the P paths."""
    e = np.asarray(e, dtype=np.complex128)
    omega_tau = np.atleast_1d(np.asarray(omega_tau))
    omega_nu = np.atleast_1d(np.asarray(omega_nu))
    if len(omega_tau) != len(omega_nu):
        raise ValueError("delay and Doppler index lists must have equal length")
    if len(e) != frame.mn:
        raise ValueError(f"error vector length {len(e)} != M*N={frame.mn}")
    p = len(omega_tau)
    if precoders is not None and len(precoders) != p:
        raise ValueError("need one precoder per path")
    u = np.empty((frame.mn, p), dtype=np.complex128)
    for i in range(p):
        w = precoders[i] if precoders is not None else None
        u[:, i] = path_operator_apply(e, omega_tau[i], omega_nu[i], frame, w)
    omega = u.conj().T @ u
    d_e2 = float(np.real(e.conj() @ e))
    return CodewordDifferenceMatrix.from_omega(omega, d_e2)


def conditional_pep_bound(
    h: np.ndarray, cdm: CodewordDifferenceMatrix, es_over_n0: float
) -> float:
    """Chernoff-style bound for a known gain vector:
    ``exp(-(Es/4N0) h^H Omega h)``."""
    h = np.asarray(h, dtype=np.complex128)
    quad = float(np.real(h.conj() @ cdm.omega @ h))
    return float(np.exp(-es_over_n0 / 4.0 * quad))


def unconditional_pep_bound(
    cdm: CodewordDifferenceMatrix,
    es_over_n0: float,
    rician_k: np.ndarray | None = None,
) -> float:
    """Average of the conditional bound over independent per-branch Rician
    gains of total power one (``1/P`` each); ``rician_k`` of zeros (the
    default) is the Rayleigh case."""
    if es_over_n0 <= 0:
        raise ValueError("es_over_n0 must be positive")
    lam = cdm.eigenvalues[: cdm.rank]
    k = np.zeros(cdm.rank) if rician_k is None else np.asarray(rician_k)[: cdm.rank]
    g = es_over_n0 / 4.0 * lam / cdm.p
    return float(np.prod(np.exp(-k * g / (1.0 + g)) / (1.0 + g)))


def rayleigh_pep_simplified(cdm: CodewordDifferenceMatrix, es_over_n0: float) -> float:
    """High-SNR Rayleigh simplification
    ``(prod lambda_i)^-1 (Es/4N0P)^-r``."""
    lam = cdm.eigenvalues[: cdm.rank]
    return float(np.prod(1.0 / lam) * (es_over_n0 / (4.0 * cdm.p)) ** (-cdm.rank))


def eigen_product_bounds(cdm: CodewordDifferenceMatrix) -> dict[str, float]:
    """Spectrum bounds of the difference matrix, all in closed form.

    - ``sum_inv_lambda_lb``: lower bound on the sum of eigenvalue inverses,
      ``r^2 / (P d_E^2)``;
    - ``sum_lambda_sq_lb``: lower bound on the sum of squared eigenvalues,
      ``P^2 d_E^4 / r``;
    - ``product_lb_exact``: lower bound on the eigenvalue product,
      ``d_E^{2r} exp(r - d_E^2 sum 1/lambda)``;
    - ``product_lb_approx``: its spectrum-free approximation ``d_E^{2r}``;
    - ``det_ub``: upper bound on the full determinant, ``d_E^{2P}``.
    """
    if cdm.rank < 1:
        raise ValueError("bounds need a matrix of rank at least one")
    lam = cdm.eigenvalues[: cdm.rank]
    d2, r, p = cdm.d_e2, cdm.rank, cdm.p
    sum_inv = float(np.sum(1.0 / lam))
    return {
        "sum_inv_lambda_lb": r**2 / (p * d2),
        "sum_lambda_sq_lb": p**2 * d2**2 / r,
        "product_lb_exact": d2**r * float(np.exp(r - d2 * sum_inv)),
        "product_lb_approx": d2**r,
        "det_ub": d2**p,
    }


@dataclass(frozen=True)
class LargePathBound:
    value: float
    in_validity_region: bool


def large_p_pep_bound(d_e2: float, es_over_n0: float, r: int = 1) -> LargePathBound:
    """Gaussian-limit PEP bound for many independent paths:
    ``exp(-(Es/16N0) d_E^2)``, valid when ``Es/4N0 >= r / (2 d_E^2)``."""
    if d_e2 < 0 or es_over_n0 <= 0:
        raise ValueError("need d_e2 >= 0 and es_over_n0 > 0")
    valid = d_e2 > 0 and es_over_n0 / 4.0 >= r / (2.0 * d_e2)
    return LargePathBound(float(np.exp(-es_over_n0 / 16.0 * d_e2)), valid)


def coding_gain_db(d_c2_min: float, d_u2_min: float) -> float:
    """Approximate coding gain of a coded system over an uncoded reference
    with minimum squared Euclidean distances ``d_c2_min`` and ``d_u2_min``."""
    if d_c2_min <= 0 or d_u2_min <= 0:
        raise ValueError("distances must be positive")
    return float(10.0 * np.log10(d_c2_min / d_u2_min))


def conditional_coding_gain(cdm: CodewordDifferenceMatrix) -> float:
    """Linear coding gain of one channel draw:
    ``(prod of the first r eigenvalues)^(1/r) / P``."""
    lam = cdm.eigenvalues[: cdm.rank]
    return float(np.exp(np.mean(np.log(lam))) / cdm.p)


def average_coding_gain(
    e: np.ndarray,
    frame: FrameParams,
    p: int,
    l_max: int,
    k_max: int,
    trials: int,
    rng: np.random.Generator,
) -> float:
    """Monte Carlo average (in dB) of the conditional coding gain over
    uniform integer delay/Doppler draws."""
    if trials < 1:
        raise ValueError("need at least one trial")
    gains = np.empty(trials)
    for t in range(trials):
        omega_tau = rng.integers(0, l_max + 1, size=p)
        omega_nu = rng.integers(-k_max, k_max + 1, size=p)
        cdm = codeword_difference_matrix(e, omega_tau, omega_nu, frame)
        gains[t] = conditional_coding_gain(cdm)
    return float(10.0 * np.log10(np.mean(gains)))

"""Exact discrete transforms between the delay-Doppler (DD), time (TD) and
time-frequency (TF) domains.

Grid conventions
----------------
A DD grid is an ``M x N`` complex array ``Z[l, k]`` indexed by delay bin
``l`` (rows) and Doppler bin ``k`` (columns).  Vectors are delay-major:
``vec(Z)[l + k*M] = Z[l, k]``, so ``vec``/``unvec`` are plain Fortran-order
reshapes.  All DFT kernels are unitary (``1/sqrt(n)`` scaling), hence every
domain conversion preserves energy.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np


class Domain(Enum):
    """Signal domain tag for a symbol vector."""

    DD = "dd"
    TD = "td"
    TF = "tf"
    TDS = "tds"
    TDA = "tda"


@dataclass(frozen=True)
class FrameParams:
    """Grid geometry: M delay bins / sub-carriers, N Doppler bins / slots.

    Critical sampling (``T * delta_f == 1``) is enforced; the derived
    quantities below follow from it.
    """

    m: int
    n: int
    delta_f: float = 15e3
    t: float = field(default=0.0)

    def __post_init__(self):
        if self.m < 1 or self.n < 1:
            raise ValueError("frame needs M >= 1 and N >= 1")
        if self.delta_f <= 0:
            raise ValueError("delta_f must be positive")
        if self.t == 0.0:
            object.__setattr__(self, "t", 1.0 / self.delta_f)
        if abs(self.t * self.delta_f - 1.0) > 1e-12:
            raise ValueError("critical sampling requires T * delta_f == 1")

    @property
    def mn(self) -> int:
        return self.m * self.n

    @property
    def bandwidth(self) -> float:
        return self.m * self.delta_f

    @property
    def frame_duration(self) -> float:
        return self.n * self.t

    @property
    def delay_resolution(self) -> float:
        return self.t / self.m

    @property
    def doppler_resolution(self) -> float:
        return 1.0 / (self.n * self.t)


@dataclass(frozen=True)
class DomainVector:
    """A symbol vector tagged with the domain it lives in."""

    domain: Domain
    data: np.ndarray
    frame: FrameParams

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.complex128)
        object.__setattr__(self, "data", data)
        if data.ndim != 1:
            raise ValueError("domain vector must be one-dimensional")
        mn = self.frame.mn
        if self.domain in (Domain.TDS, Domain.TDA):
            if len(data) % mn != 0 or len(data) == 0:
                raise ValueError(
                    f"{self.domain.value} vector length {len(data)} not a "
                    f"multiple of M*N={mn}"
                )
        elif len(data) != mn:
            raise ValueError(
                f"{self.domain.value} vector length {len(data)} != M*N={mn}"
            )

    def energy(self) -> float:
        return float(np.sum(np.abs(self.data) ** 2))


def vec(grid: np.ndarray) -> np.ndarray:
    """Delay-major vectorization of an M x N grid."""
    return np.asarray(grid).reshape(-1, order="F")


def unvec(x: np.ndarray, frame: FrameParams) -> np.ndarray:
    """Inverse of :func:`vec`: reshape a length-MN vector to an M x N grid."""
    x = np.asarray(x)
    if x.shape[-1] != frame.mn:
        raise ValueError(f"vector length {x.shape[-1]} != M*N={frame.mn}")
    return x.reshape(frame.m, frame.n, order="F")


def dft_matrix(n: int) -> np.ndarray:
    """Unitary DFT matrix ``F[a, b] = exp(-2j*pi*a*b/n) / sqrt(n)``."""
    a = np.arange(n)
    return np.exp(-2j * np.pi * np.outer(a, a) / n) / np.sqrt(n)


def dzt(x: np.ndarray, frame: FrameParams) -> np.ndarray:
    """Zak transform of a length-MN sequence onto the M x N DD grid.

    ``Z[l, k] = (1/sqrt(N)) * sum_n x[l + n*M] * exp(-2j*pi*n*k/N)``.
    The input is treated as one period of an MN-periodic sequence.
    """
    x = np.asarray(x, dtype=np.complex128)
    m, n = frame.m, frame.n
    if x.shape[-1] != m * n:
        raise ValueError(f"sequence length {x.shape[-1]} != M*N={m * n}")
    # rows of x.reshape(n, m) are the n-th length-M segments
    segments = x.reshape(x.shape[:-1] + (n, m))
    return np.swapaxes(np.fft.fft(segments, axis=-2), -1, -2) / np.sqrt(n)


def idzt(z: np.ndarray, frame: FrameParams) -> np.ndarray:
    """Inverse Zak transform: ``x[l + n*M] = (1/sqrt(N)) sum_k Z[l,k] e^{2j pi n k/N}``."""
    z = np.asarray(z, dtype=np.complex128)
    m, n = frame.m, frame.n
    if z.shape[-2:] != (m, n):
        raise ValueError(f"grid shape {z.shape[-2:]} != ({m}, {n})")
    segments = np.swapaxes(np.sqrt(n) * np.fft.ifft(z, axis=-1), -1, -2)
    return segments.reshape(z.shape[:-2] + (m * n,))


def dzt_quasi_periodic(z: np.ndarray, l: int, k: int, frame: FrameParams) -> complex:
    """Evaluate the DD grid at arbitrary integer indices.

    Quasi-periodic along delay (period M, phase ``exp(2j*pi*k/N)`` per wrap)
    and periodic along Doppler (period N).
    """
    m, n = frame.m, frame.n
    wraps = l // m
    return z[l - wraps * m, k % n] * np.exp(2j * np.pi * wraps * (k % n) / n)


def dft_from_dzt(z: np.ndarray, frame: FrameParams) -> np.ndarray:
    """Reassemble the (unnormalized) MN-point DFT of ``x`` from its DD grid.

    ``X[q] = sqrt(N) * sum_l Z[l, q mod N] * exp(-2j*pi*q*l/(M*N))`` for
    ``0 <= q < M*N``.
    """
    m, n = frame.m, frame.n
    q = np.arange(m * n)
    l = np.arange(m)
    phases = np.exp(-2j * np.pi * np.outer(l, q) / (m * n))
    return np.sqrt(n) * np.sum(z[:, q % n] * phases, axis=0)


def isfft(x_dd: np.ndarray) -> np.ndarray:
    """Inverse symplectic finite Fourier transform, DD grid -> TF grid.

    ``X_TF[m', n'] = (1/sqrt(MN)) sum_{l,k} X_DD[l,k] e^{2j pi (n'k/N - m'l/M)}``.
    """
    x_dd = np.asarray(x_dd, dtype=np.complex128)
    m, n = x_dd.shape[-2:]
    return np.sqrt(n / m) * np.fft.fft(np.fft.ifft(x_dd, axis=-1), axis=-2)


def sfft(y_tf: np.ndarray) -> np.ndarray:
    """Symplectic finite Fourier transform, TF grid -> DD grid (inverse of
    :func:`isfft`)."""
    y_tf = np.asarray(y_tf, dtype=np.complex128)
    m, n = y_tf.shape[-2:]
    return np.sqrt(m / n) * np.fft.ifft(np.fft.fft(y_tf, axis=-1), axis=-2)


def _require_domain(v: DomainVector, domain: Domain) -> None:
    if v.domain is not domain:
        raise ValueError(f"expected a {domain.value} vector, got {v.domain.value}")


def dd_to_td_vec(x: np.ndarray, frame: FrameParams) -> np.ndarray:
    """Apply the DD -> TD kernel (N-point inverse DFT across Doppler, batched
    over the M delay bins; the MN x MN matrix is never formed)."""
    grid = unvec(x, frame)
    return vec(np.sqrt(frame.n) * np.fft.ifft(grid, axis=-1))


def td_to_dd_vec(r: np.ndarray, frame: FrameParams) -> np.ndarray:
    """Apply the TD -> DD kernel (adjoint of :func:`dd_to_td_vec`)."""
    grid = unvec(r, frame)
    return vec(np.fft.fft(grid, axis=-1) / np.sqrt(frame.n))


def dd_to_td(v: DomainVector) -> DomainVector:
    """Convert a DD-domain symbol vector to the time domain."""
    _require_domain(v, Domain.DD)
    return DomainVector(Domain.TD, dd_to_td_vec(v.data, v.frame), v.frame)


def td_to_dd(v: DomainVector) -> DomainVector:
    """Convert a TD-domain symbol vector to the delay-Doppler domain."""
    _require_domain(v, Domain.TD)
    return DomainVector(Domain.DD, td_to_dd_vec(v.data, v.frame), v.frame)


def dd_to_td_matrix(frame: FrameParams) -> np.ndarray:
    """Dense MN x MN DD -> TD kernel (testing oracle; prefer the FFT path)."""
    return np.kron(dft_matrix(frame.n).conj().T, np.eye(frame.m))


def td_to_dd_matrix(frame: FrameParams) -> np.ndarray:
    """Dense MN x MN TD -> DD kernel (testing oracle; prefer the FFT path)."""
    return np.kron(dft_matrix(frame.n), np.eye(frame.m))

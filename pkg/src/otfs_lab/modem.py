"""DD-domain modem: constellations, OTFS modulation with rectangular pulse,
reduced-CP framing, AWGN injection, and the full transmit chain.

A frame carries one M x N grid of constellation symbols.  Modulation is the
DD -> TD kernel; with the rectangular pulse the DD-domain pulse grid is the
constant ``1/sqrt(MN)``, so pulse shaping is a pure scaling and the Zak
transform of the transmitted sequence reproduces the symbol grid exactly.
A single cyclic prefix of ``l_max`` samples covers the whole frame, which
makes the circulant channel model exact for integer Doppler.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from otfs_lab.channel import PathSet
from otfs_lab.transforms import (
    Domain,
    DomainVector,
    FrameParams,
    dd_to_td_vec,
    td_to_dd_vec,
    unvec,
    vec,
)


# ---------------------------------------------------------------------------
# Constellations
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Constellation:
    """Unit-average-energy constellation with an explicit bit labeling.

    ``bits[i]`` is the label of ``points[i]``; the labelings below are Gray
    codes, so nearest neighbours differ in one bit.
    """

    name: str
    points: np.ndarray
    bits: np.ndarray  # shape (size, bits_per_symbol), entries 0/1

    def __post_init__(self):
        points = np.asarray(self.points, dtype=np.complex128)
        bits = np.asarray(self.bits, dtype=np.int8)
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "bits", bits)
        es = np.mean(np.abs(points) ** 2)
        if abs(es - 1.0) > 1e-12:
            raise ValueError(f"constellation energy {es} != 1")

    @property
    def size(self) -> int:
        return len(self.points)

    @property
    def bits_per_symbol(self) -> int:
        return self.bits.shape[1]

    def modulate_bits(self, bits: np.ndarray) -> np.ndarray:
        """Map a bit array (length divisible by bits/symbol) to symbols."""
        bits = np.asarray(bits, dtype=np.int8).reshape(-1, self.bits_per_symbol)
        weights = 1 << np.arange(self.bits_per_symbol - 1, -1, -1)
        labels = bits @ weights
        return self.points[self._label_to_index()[labels]]

    def _label_to_index(self) -> np.ndarray:
        weights = 1 << np.arange(self.bits_per_symbol - 1, -1, -1)
        labels = self.bits @ weights
        table = np.empty(self.size, dtype=int)
        table[labels] = np.arange(self.size)
        return table

    def slice(self, soft: np.ndarray) -> np.ndarray:
        """Nearest-point hard decisions; ties go to the lowest point index."""
        soft = np.asarray(soft)
        d2 = np.abs(soft[..., None] - self.points) ** 2
        return np.argmin(d2, axis=-1)

    def indices_to_bits(self, indices: np.ndarray) -> np.ndarray:
        return self.bits[np.asarray(indices)].reshape(-1)

    def random_symbols(self, count: int, rng: np.random.Generator) -> np.ndarray:
        return self.points[rng.integers(0, self.size, size=count)]


@lru_cache(maxsize=None)
def constellation(name: str) -> Constellation:
    """Factory for the supported mappings: bpsk, qpsk, 16qam (Gray-labeled)."""
    name = name.lower()
    if name == "bpsk":
        return Constellation("bpsk", np.array([1.0, -1.0]), np.array([[0], [1]]))
    if name == "qpsk":
        # bit pair (b0, b1) -> ((1-2*b0) + 1j*(1-2*b1)) / sqrt(2)
        pts, bits = [], []
        for b0 in (0, 1):
            for b1 in (0, 1):
                pts.append(((1 - 2 * b0) + 1j * (1 - 2 * b1)) / np.sqrt(2))
                bits.append([b0, b1])
        return Constellation("qpsk", np.array(pts), np.array(bits))
    if name == "16qam":
        # per-axis Gray code over levels (-3,-1,1,3)/sqrt(10)
        gray = {(0, 0): -3, (0, 1): -1, (1, 1): 1, (1, 0): 3}
        pts, bits = [], []
        for b0 in (0, 1):
            for b1 in (0, 1):
                for b2 in (0, 1):
                    for b3 in (0, 1):
                        re = gray[(b0, b1)]
                        im = gray[(b2, b3)]
                        pts.append((re + 1j * im) / np.sqrt(10))
                        bits.append([b0, b1, b2, b3])
        return Constellation("16qam", np.array(pts), np.array(bits))
    if name == "gaussian":
        raise ValueError("the Gaussian ensemble has no discrete point set")
    raise ValueError(f"unknown constellation {name!r}")


# ---------------------------------------------------------------------------
# OTFS modulation and framing
# ---------------------------------------------------------------------------


def modulate(x_dd: np.ndarray, frame: FrameParams) -> DomainVector:
    """DD grid -> TD symbol vector (rectangular transmit pulse)."""
    x_dd = np.asarray(x_dd, dtype=np.complex128)
    if x_dd.shape != (frame.m, frame.n):
        raise ValueError(f"grid shape {x_dd.shape} != ({frame.m}, {frame.n})")
    return DomainVector(Domain.TD, dd_to_td_vec(vec(x_dd), frame), frame)


def demodulate(r: DomainVector) -> np.ndarray:
    """TD received vector -> DD grid (rectangular receive pulse)."""
    if r.domain is not Domain.TD:
        raise ValueError("demodulate expects a TD vector")
    return unvec(td_to_dd_vec(r.data, r.frame), r.frame)


def dd_pulse_shape(x_dd: np.ndarray, dz_g: np.ndarray) -> np.ndarray:
    """DD-domain view of pulse shaping: ``sqrt(MN) * X .* DZ_g``.

    For the rectangular pulse ``DZ_g = 1/sqrt(MN)`` and this is the identity.
    General pulse matched filtering is out of scope; the hook exists so the
    multiplicative relationship is testable for arbitrary pulse grids.
    """
    x_dd = np.asarray(x_dd, dtype=np.complex128)
    dz_g = np.asarray(dz_g, dtype=np.complex128)
    if x_dd.shape != dz_g.shape:
        raise ValueError("pulse grid shape must match the symbol grid")
    mn = x_dd.shape[0] * x_dd.shape[1]
    return np.sqrt(mn) * x_dd * dz_g


def rectangular_pulse_grid(frame: FrameParams) -> np.ndarray:
    """DD grid of the rectangular pulse: constant ``1/sqrt(MN)``."""
    return np.full((frame.m, frame.n), 1.0 / np.sqrt(frame.mn), dtype=np.complex128)


@dataclass(frozen=True)
class OtfsFrame:
    """TD payload plus its single leading cyclic prefix of ``l_max`` samples."""

    payload: DomainVector
    cp: np.ndarray
    frame: FrameParams

    def __post_init__(self):
        if self.payload.domain is not Domain.TD:
            raise ValueError("frame payload must be a TD vector")
        l_max = len(self.cp)
        if l_max and not np.array_equal(self.cp, self.payload.data[-l_max:]):
            raise ValueError("cyclic prefix must copy the final payload samples")

    @property
    def l_max(self) -> int:
        return len(self.cp)

    def samples(self) -> np.ndarray:
        """The on-air sequence: cp followed by the payload."""
        return np.concatenate([self.cp, self.payload.data])


def add_cp(x_td: DomainVector, l_max: int) -> OtfsFrame:
    if l_max < 0 or l_max > x_td.frame.mn:
        raise ValueError("cp length must lie in [0, MN]")
    cp = x_td.data[-l_max:].copy() if l_max else np.zeros(0, dtype=np.complex128)
    return OtfsFrame(x_td, cp, x_td.frame)


def remove_cp(received: np.ndarray, l_max: int, frame: FrameParams) -> DomainVector:
    received = np.asarray(received, dtype=np.complex128)
    if len(received) != frame.mn + l_max:
        raise ValueError(f"received length {len(received)} != MN + l_max")
    return DomainVector(Domain.TD, received[l_max:], frame)


def apply_fir_channel(otfs_frame: OtfsFrame, paths: PathSet) -> np.ndarray:
    """Propagate the CP-extended sequence through the physical channel.

    Per path: delay the transmitted stream by ``l_p`` samples and modulate by
    the Doppler ramp (phase referenced to the first payload sample).  Returns
    the MN payload-aligned receive samples, i.e. the CP is already dropped.
    For integer Doppler this equals the circulant matrix model exactly; with
    fractional Doppler the CP samples carry a small phase mismatch.
    """
    if paths.delays.max() > otfs_frame.l_max:
        raise ValueError(
            f"channel delay {paths.delays.max()} exceeds cp length {otfs_frame.l_max}"
        )
    mn = paths.frame.mn
    stream = otfs_frame.samples()
    l_max = otfs_frame.l_max
    n_idx = np.arange(mn)
    out = np.zeros(mn, dtype=np.complex128)
    for h, l_p, nu in zip(paths.gains, paths.delays, paths.dopplers):
        delayed = stream[l_max - l_p : l_max - l_p + mn]
        out += h * np.exp(2j * np.pi * nu * (n_idx - l_p) / mn) * delayed
    return out


def awgn(x: np.ndarray, n0: float, rng: np.random.Generator) -> np.ndarray:
    """Add circularly-symmetric complex Gaussian noise of variance ``n0``
    per sample (``n0/2`` per real dimension)."""
    if n0 < 0:
        raise ValueError("noise power must be non-negative")
    x = np.asarray(x, dtype=np.complex128)
    if n0 == 0:
        return x.copy()
    w = rng.standard_normal(x.shape) + 1j * rng.standard_normal(x.shape)
    return x + np.sqrt(n0 / 2.0) * w


def n0_from_esn0_db(esn0_db: float, es: float = 1.0) -> float:
    """Noise PSD for a target symbol-energy-to-noise ratio in dB."""
    return es * 10.0 ** (-esn0_db / 10.0)


def transmit(
    x_dd: np.ndarray,
    paths: PathSet,
    n0: float,
    rng: np.random.Generator,
) -> tuple[DomainVector, DomainVector]:
    """Full noisy transmit chain via the circulant matrix model.

    Returns the DD-domain received grid vector and the raw TD received
    vector, so detectors can pick their preferred domain.
    """
    from otfs_lab.channel import apply_td_channel

    frame = paths.frame
    x_td = modulate(x_dd, frame)
    r = apply_td_channel(paths, x_td.data)
    r = awgn(r, n0, rng)
    r_td = DomainVector(Domain.TD, r, frame)
    y_dd = DomainVector(Domain.DD, td_to_dd_vec(r, frame), frame)
    return y_dd, r_td

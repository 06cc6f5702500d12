"""Spatially-spread OTFS pipeline for joint radar sensing and communication.

A DFT across the antenna array discretizes the angular domain into
orthogonal beams: an on-grid departure angle couples to exactly one
transmit-antenna index and (for the round trip) one receive index.  On that
grid the radar return is block-sparse, angle estimation reduces to per-block
energy detection, and the communication PEP is shaped by per-path symbol
precoders built from virtual delay/Doppler indices.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from otfs_lab.analysis import ShiftPhasePrecoder
from otfs_lab.transforms import FrameParams, dd_to_td_vec


@dataclass(frozen=True)
class SsOtfsConfig:
    """Array geometry and power budget for the spatially-spread transmitter."""

    n_bs: int
    k_users: int
    p_paths: int
    frame: FrameParams
    n_range: int = 0
    alpha_total: float = 1.0

    def __post_init__(self):
        if self.n_bs < 1 or self.k_users < 1 or self.p_paths < 1:
            raise ValueError("antenna, user and path counts must be positive")
        if self.n_range % 2 or not 0 <= self.n_range < self.n_bs:
            raise ValueError("n_range must be even and smaller than n_bs")
        if self.alpha_total <= 0:
            raise ValueError("total power must be positive")

    @property
    def theta_range(self) -> float:
        """Beam width implied by the antenna count reserved per beam."""
        return 2.0 * self.n_range / self.n_bs


@dataclass(frozen=True)
class IsacTarget:
    """One scatterer: communication path plus its radar round trip.

    Round-trip delay and Doppler are twice the one-way values by
    construction.
    """

    aod: float
    comm_gain: complex
    radar_gain: complex
    delay: int
    doppler: float

    @property
    def radar_delay(self) -> int:
        return 2 * self.delay

    @property
    def radar_doppler(self) -> float:
        return 2.0 * self.doppler


def steering_vector(phi: float, n_bs: int) -> np.ndarray:
    """Unit-norm half-wavelength array response for departure angle ``phi``."""
    if abs(phi) > np.pi / 2 + 1e-12:
        raise ValueError("angle must lie in [-pi/2, pi/2]")
    n = np.arange(n_bs)
    return np.exp(1j * np.pi * n * np.sin(phi)) / np.sqrt(n_bs)


def angular_indices(phi: float, n_bs: int) -> tuple[float, float]:
    """Transmit and receive angular indices of an angle (1-based).

    On-grid angles (``sin(phi)`` an integer multiple of ``2/n_bs``) give
    integer indices; off-grid angles land between grid points.
    """
    q = np.sin(phi) * n_bs / 2.0
    a = (n_bs - q) % n_bs + 1.0
    a_tilde = (n_bs + q) % n_bs + 1.0
    return float(a), float(a_tilde)


def angle_for_transmit_index(a: int, n_bs: int) -> float:
    """An on-grid departure angle whose transmit angular index is ``a``."""
    if not 1 <= a <= n_bs:
        raise ValueError("transmit index out of range")
    s = -2.0 * (a - 1) / n_bs
    if s < -1.0:
        s += 2.0
    return float(np.arcsin(s))


def angular_channel(
    phi: float, alpha: np.ndarray, n_bs: int
) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form angular-domain couplings of one path.

    Returns the length-``n_bs`` communication row and the
    ``n_bs x n_bs`` radar block; for on-grid angles both have a single
    non-zero entry of value ``sqrt(alpha)`` at the angular indices.
    """
    alpha = np.broadcast_to(np.asarray(alpha, dtype=float), (n_bs,))
    s = np.sin(phi)
    idx = np.arange(n_bs)

    def geo_sum(z: np.ndarray) -> np.ndarray:
        # sum_{n=0}^{N-1} exp(1j pi n z), exact at the z -> even-integer limit
        z = np.asarray(z, dtype=float)
        num = np.exp(1j * np.pi * n_bs * z) - 1.0
        den = np.exp(1j * np.pi * z) - 1.0
        on_grid = np.isclose(np.abs(den), 0.0, atol=1e-12)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = num / den
        return np.where(on_grid, float(n_bs) + 0j, ratio)

    t_sum = geo_sum(s + 2.0 * idx / n_bs)
    r_sum = geo_sum(s - 2.0 * idx / n_bs)
    comm_row = np.sqrt(alpha) / n_bs * t_sum
    radar_block = np.sqrt(alpha)[None, :] / n_bs**2 * np.outer(r_sum, t_sum)
    return comm_row, radar_block


def dense_angular_oracle(
    phi: float, alpha: np.ndarray, n_bs: int
) -> tuple[np.ndarray, np.ndarray]:
    """Brute-force DFT products for validating :func:`angular_channel`."""
    from otfs_lab.transforms import dft_matrix

    alpha = np.broadcast_to(np.asarray(alpha, dtype=float), (n_bs,))
    f = dft_matrix(n_bs)
    a_vec = steering_vector(phi, n_bs)
    alpha_mat = np.diag(np.sqrt(alpha))
    comm_row = a_vec @ f.conj().T @ alpha_mat
    radar_block = f @ np.outer(a_vec, a_vec) @ f.conj().T @ alpha_mat
    return comm_row, radar_block


def validate_precoder(w: ShiftPhasePrecoder | np.ndarray, mn: int) -> None:
    if isinstance(w, ShiftPhasePrecoder):
        if w.mn != mn:
            raise ValueError("precoder size mismatch")
        return
    w = np.asarray(w)
    if w.shape != (mn, mn) or np.max(np.abs(w @ w.conj().T - np.eye(mn))) > 1e-10:
        raise ValueError("precoder must be unitary of size MN")


def _apply_precoder(w, v: np.ndarray) -> np.ndarray:
    if isinstance(w, ShiftPhasePrecoder):
        return w.apply(v)
    return np.asarray(w) @ v


def ss_transmit(
    x_dd: np.ndarray,
    config: SsOtfsConfig,
    precoders: list,
    alpha: np.ndarray,
) -> np.ndarray:
    """Full transmitter chain: OTFS modulate, per-antenna precode, allocate
    power, and spatially spread.  Returns the concatenated per-antenna
    air-domain vector of length ``n_bs * MN``."""
    frame = config.frame
    mn = frame.mn
    if len(precoders) != config.n_bs:
        raise ValueError("one precoder per antenna required")
    alpha = np.broadcast_to(np.asarray(alpha, dtype=float), (config.n_bs,))
    v = dd_to_td_vec(np.asarray(x_dd, dtype=np.complex128).reshape(-1), frame)
    z = np.empty((mn, config.n_bs), dtype=np.complex128)
    for nt in range(config.n_bs):
        validate_precoder(precoders[nt], mn)
        z[:, nt] = np.sqrt(alpha[nt]) * _apply_precoder(precoders[nt], v)
    # spatial spreading: mix the per-antenna streams with an inverse DFT
    s = np.sqrt(config.n_bs) * np.fft.ifft(z, axis=1)
    return s.reshape(-1, order="F")


def spatial_despread(r_tds: np.ndarray, config: SsOtfsConfig) -> np.ndarray:
    """Receive-side DFT across antennas, undoing :func:`ss_transmit`'s mix."""
    mn = config.frame.mn
    r = np.asarray(r_tds, dtype=np.complex128).reshape(mn, config.n_bs, order="F")
    z = np.fft.fft(r, axis=1) / np.sqrt(config.n_bs)
    return z.reshape(-1, order="F")


@dataclass(frozen=True)
class RadarSensingMatrix:
    """Lazily-applied block-sparse radar operator on the angular grid.

    Block ``(a_tilde - 1, a - 1)`` of the full ``(n_bs MN)^2`` matrix holds
    ``sqrt(alpha_a) * gain * delay-shift * Doppler-ramp``; all other blocks
    vanish.  It acts on the concatenated precoded (pre-power) vector.
    """

    config: SsOtfsConfig
    blocks: dict = field(default_factory=dict)  # (rx_idx0, tx_idx0) -> (scale, delay, doppler)

    @classmethod
    def from_targets(
        cls, targets: list[IsacTarget], config: SsOtfsConfig, alpha: np.ndarray
    ) -> "RadarSensingMatrix":
        alpha = np.broadcast_to(np.asarray(alpha, dtype=float), (config.n_bs,))
        blocks = {}
        seen_tx = set()
        for tgt in targets:
            a, a_tilde = angular_indices(tgt.aod, config.n_bs)
            if abs(a - round(a)) > 1e-9 or abs(a_tilde - round(a_tilde)) > 1e-9:
                raise ValueError("sensing-grid fast path needs on-grid angles")
            tx, rx = int(round(a)) - 1, int(round(a_tilde)) - 1
            if tx in seen_tx:
                raise ValueError("angular index collision between targets")
            seen_tx.add(tx)
            scale = np.sqrt(alpha[tx]) * tgt.radar_gain
            blocks[(rx, tx)] = (scale, tgt.radar_delay, tgt.radar_doppler)
        return cls(config, blocks)

    def apply(self, d: np.ndarray) -> np.ndarray:
        mn = self.config.frame.mn
        d = np.asarray(d, dtype=np.complex128).reshape(self.config.n_bs, mn)
        out = np.zeros_like(d)
        idx = np.arange(mn)
        for (rx, tx), (scale, delay, doppler) in self.blocks.items():
            ramp = np.exp(2j * np.pi * doppler * idx / mn)
            out[rx] += scale * np.roll(ramp * d[tx], int(delay) % mn)
        return out.reshape(-1)

    def to_dense(self) -> np.ndarray:
        mn = self.config.frame.mn
        n = self.config.n_bs * mn
        idx = np.arange(mn)
        dense = np.zeros((n, n), dtype=np.complex128)
        for (rx, tx), (scale, delay, doppler) in self.blocks.items():
            block = np.zeros((mn, mn), dtype=np.complex128)
            block[(idx + int(delay)) % mn, idx] = scale * np.exp(
                2j * np.pi * doppler * idx / mn
            )
            dense[rx * mn : (rx + 1) * mn, tx * mn : (tx + 1) * mn] = block
        return dense


def aoa_estimate(
    z_tilde_samples: np.ndarray, config: SsOtfsConfig, kp_count: int
) -> np.ndarray:
    """Receive angular indices (1-based) of the ``kp_count`` strongest
    antenna blocks, by average per-block power over the sample frames."""
    if kp_count > config.n_bs:
        raise ValueError("cannot estimate more angles than antennas")
    z = np.atleast_2d(np.asarray(z_tilde_samples, dtype=np.complex128))
    mn = config.frame.mn
    if z.shape[1] != config.n_bs * mn:
        raise ValueError("sample length must be n_bs * MN")
    power = np.mean(np.abs(z.reshape(z.shape[0], config.n_bs, mn)) ** 2, axis=(0, 2))
    top = np.argsort(-power, kind="stable")[:kp_count]
    return np.sort(top + 1)


def radar_power_allocation(
    radar_gains_sq: np.ndarray, alpha_total: float, n_range: int
) -> np.ndarray:
    """Max-min echo power allocation: inverse-gain weighting so every
    target returns the same received power."""
    g = np.asarray(radar_gains_sq, dtype=float)
    if np.any(g <= 0):
        raise ValueError("radar gains must be non-zero")
    inv = 1.0 / g
    return (alpha_total / (n_range + 1)) * inv / inv.sum()


def comm_power_allocation(alpha_user_total: float, p: int) -> np.ndarray:
    """Equal split across a user's paths (maximizes the power geometric
    mean, hence minimizes the PEP bound)."""
    if p < 1:
        raise ValueError("need at least one path")
    return np.full(p, alpha_user_total / p)


def precoding_matrices(
    est_delays: np.ndarray,
    est_dopplers: np.ndarray,
    frame: FrameParams,
    virtual_delays: np.ndarray | None = None,
    virtual_dopplers: np.ndarray | None = None,
) -> list[ShiftPhasePrecoder]:
    """Per-path precoders that retarget each path onto virtual indices.

    Each precoder pre-rotates away the estimated delay/Doppler and applies
    the virtual pair instead; with pairwise-distinct virtual indices the
    effective paths become near-orthogonal.  Defaults: path ``p`` gets
    virtual indices ``(p, p)``.
    """
    est_delays = np.atleast_1d(np.asarray(est_delays, dtype=int))
    est_dopplers = np.atleast_1d(np.asarray(est_dopplers, dtype=float))
    p = len(est_delays)
    if virtual_delays is None:
        virtual_delays = np.arange(p)
    if virtual_dopplers is None:
        virtual_dopplers = np.arange(p)
    virtual_delays = np.asarray(virtual_delays, dtype=int)
    virtual_dopplers = np.asarray(virtual_dopplers, dtype=int)
    if len(set(virtual_delays.tolist())) != p or len(set(virtual_dopplers.tolist())) != p:
        raise ValueError("virtual delay and Doppler indices must be pairwise distinct")
    out = []
    for i in range(p):
        out.append(
            ShiftPhasePrecoder(
                frame.mn,
                phase_pre=-float(est_dopplers[i]),
                shift=int(virtual_delays[i]) - int(est_delays[i]),
                phase_post=float(virtual_dopplers[i]),
            )
        )
    return out


def beam_antenna_set(a: int, n_range: int, n_bs: int) -> list[int]:
    """The ``n_range + 1`` contiguous (mod ``n_bs``) antenna indices
    centered on transmit index ``a`` (all 1-based)."""
    if n_range % 2:
        raise ValueError("n_range must be even")
    return [(a - 1 + off) % n_bs + 1 for off in range(-n_range // 2, n_range // 2 + 1)]


# ---------------------------------------------------------------------------
# Scenario files
# ---------------------------------------------------------------------------


def scenario_from_dict(record: dict) -> tuple[SsOtfsConfig, list[list[IsacTarget]]]:
    """Build a config and per-user target lists from a scenario record.

    Schema: ``{n_bs, m, n, alpha_total, n_range, users: [{paths: [{aod_deg,
    comm_gain: {re, im}, radar_gain: {re, im}, delay, doppler}]}]}``.
    """
    frame = FrameParams(record["m"], record["n"], record.get("delta_f", 15e3))
    users = []
    for user in record["users"]:
        paths = []
        for path in user["paths"]:
            paths.append(
                IsacTarget(
                    aod=np.deg2rad(path["aod_deg"]),
                    comm_gain=path["comm_gain"]["re"] + 1j * path["comm_gain"]["im"],
                    radar_gain=path["radar_gain"]["re"] + 1j * path["radar_gain"]["im"],
                    delay=int(path["delay"]),
                    doppler=float(path["doppler"]),
                )
            )
        users.append(paths)
    if len({len(paths) for paths in users}) != 1:
        raise ValueError("all users must have the same number of paths")
    config = SsOtfsConfig(
        n_bs=int(record["n_bs"]),
        k_users=len(users),
        p_paths=len(users[0]),
        frame=frame,
        n_range=int(record.get("n_range", 0)),
        alpha_total=float(record.get("alpha_total", 1.0)),
    )
    return config, users


def load_scenario(path: str | Path) -> tuple[SsOtfsConfig, list[list[IsacTarget]]]:
    with open(path) as fh:
        return scenario_from_dict(json.load(fh))

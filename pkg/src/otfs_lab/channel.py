"""Linear time-varying channel model.

A channel is a set of P discrete paths, each with a complex gain, an integer
delay tap and a (possibly fractional) Doppler index.  The module builds the
deterministic effective channel matrices in the TD/TF/DD domains, evaluates
the closed-form DD input-output relations, draws random path sets under a
power profile, and computes the second-order statistics of continuous
scattering profiles.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np
from scipy import integrate

from otfs_lab.transforms import FrameParams, unvec, vec

#: fixed fractional-delay policy: only integer delay taps are representable.
#: Cyclic-shift matrices have no well-defined non-integer power, and the
#: delay-domain sampling of wideband systems is fine enough that sub-tap
#: delays are negligible; PathSet therefore rejects non-integer delays.


@dataclass(frozen=True)
class PathSet:
    """P discrete propagation paths over a fixed frame geometry."""

    gains: np.ndarray  # complex, shape (P,)
    delays: np.ndarray  # integer taps, shape (P,)
    dopplers: np.ndarray  # real Doppler indices k_p + kappa_p, shape (P,)
    frame: FrameParams

    def __post_init__(self):
        gains = np.atleast_1d(np.asarray(self.gains, dtype=np.complex128))
        delays_f = np.atleast_1d(np.asarray(self.delays, dtype=float))
        dopplers = np.atleast_1d(np.asarray(self.dopplers, dtype=float))
        if not (len(gains) == len(delays_f) == len(dopplers)):
            raise ValueError("gains, delays and dopplers must have equal length")
        if len(gains) < 1:
            raise ValueError("a path set needs at least one path")
        if np.any(delays_f != np.round(delays_f)):
            raise ValueError("fractional delay taps are not supported (must be 0)")
        delays = delays_f.astype(int)
        if np.any(delays < 0) or np.any(delays > self.frame.m - 1):
            raise ValueError(f"delay taps must lie in [0, {self.frame.m - 1}]")
        if np.any(np.abs(dopplers) > self.frame.n / 2):
            raise ValueError(f"|doppler| must not exceed N/2 = {self.frame.n / 2}")
        object.__setattr__(self, "gains", gains)
        object.__setattr__(self, "delays", delays)
        object.__setattr__(self, "dopplers", dopplers)

    @property
    def p(self) -> int:
        return len(self.gains)

    @property
    def is_integer_doppler(self) -> bool:
        return bool(np.all(self.dopplers == np.round(self.dopplers)))

    def total_power(self) -> float:
        return float(np.sum(np.abs(self.gains) ** 2))

    def to_json(self) -> str:
        record = {
            "M": self.frame.m,
            "N": self.frame.n,
            "delta_f": self.frame.delta_f,
            "paths": [
                {
                    "re": float(g.real),
                    "im": float(g.imag),
                    "delay": int(d),
                    "doppler": float(k),
                }
                for g, d, k in zip(self.gains, self.delays, self.dopplers)
            ],
        }
        return json.dumps(record)

    @classmethod
    def from_json(cls, text: str) -> "PathSet":
        record = json.loads(text)
        frame = FrameParams(record["M"], record["N"], record["delta_f"])
        paths = record["paths"]
        return cls(
            gains=np.array([p["re"] + 1j * p["im"] for p in paths]),
            delays=np.array([p["delay"] for p in paths]),
            dopplers=np.array([p["doppler"] for p in paths]),
            frame=frame,
        )


class ChannelDomain(Enum):
    TD = "td"
    TF = "tf"
    DD = "dd"


@dataclass(frozen=True)
class EffectiveChannel:
    """Dense MN x MN effective channel matrix in one domain."""

    domain: ChannelDomain
    matrix: np.ndarray
    source: PathSet


def apply_td_channel(paths: PathSet, x: np.ndarray) -> np.ndarray:
    """Apply the TD effective channel to a length-MN vector in O(P*MN).

    Each path contributes a Doppler phase ramp followed by a cyclic delay.
    """
    x = np.asarray(x, dtype=np.complex128)
    mn = paths.frame.mn
    idx = np.arange(mn)
    out = np.zeros(mn, dtype=np.complex128)
    for h, l, nu in zip(paths.gains, paths.delays, paths.dopplers):
        phased = h * np.exp(2j * np.pi * nu * idx / mn) * x
        out += np.roll(phased, l)
    return out


def td_effective_channel(paths: PathSet) -> EffectiveChannel:
    """TD-domain matrix: sum over paths of (cyclic shift)^l * diag(phase ramp)."""
    mn = paths.frame.mn
    idx = np.arange(mn)
    h_td = np.zeros((mn, mn), dtype=np.complex128)
    for h, l, nu in zip(paths.gains, paths.delays, paths.dopplers):
        rows = (idx + l) % mn
        h_td[rows, idx] += h * np.exp(2j * np.pi * nu * idx / mn)
    return EffectiveChannel(ChannelDomain.TD, h_td, paths)


def _doppler_conjugate(h_td: np.ndarray, frame: FrameParams, forward: bool) -> np.ndarray:
    """Conjugate a matrix by the Doppler-DFT kernel via batched FFTs."""
    m, n = frame.m, frame.n
    mn = m * n
    a = h_td.reshape(n, m, mn)
    if forward:
        a = np.fft.fft(a, axis=0) / np.sqrt(n)
    else:
        a = np.sqrt(n) * np.fft.ifft(a, axis=0)
    left = a.reshape(mn, mn)
    b = left.conj().T.reshape(n, m, mn)
    if forward:
        b = np.fft.fft(b, axis=0) / np.sqrt(n)
    else:
        b = np.sqrt(n) * np.fft.ifft(b, axis=0)
    return b.reshape(mn, mn).conj().T


def _subcarrier_conjugate(h_td: np.ndarray, frame: FrameParams) -> np.ndarray:
    """Conjugate a matrix by the per-slot delay-DFT kernel via batched FFTs."""
    m, n = frame.m, frame.n
    mn = m * n
    a = h_td.reshape(n, m, mn)
    a = np.fft.fft(a, axis=1) / np.sqrt(m)
    left = a.reshape(mn, mn)
    b = left.conj().T.reshape(n, m, mn)
    b = np.fft.fft(b, axis=1) / np.sqrt(m)
    return b.reshape(mn, mn).conj().T


def dd_effective_channel(paths: PathSet) -> EffectiveChannel:
    """DD-domain matrix, computed by FFT conjugation of the TD matrix."""
    h_td = td_effective_channel(paths).matrix
    return EffectiveChannel(
        ChannelDomain.DD, _doppler_conjugate(h_td, paths.frame, forward=True), paths
    )


def tf_effective_channel(paths: PathSet) -> EffectiveChannel:
    """TF-domain matrix, computed by FFT conjugation of the TD matrix."""
    h_td = td_effective_channel(paths).matrix
    return EffectiveChannel(
        ChannelDomain.TF, _subcarrier_conjugate(h_td, paths.frame), paths
    )


def dd_io_integer(x_dd: np.ndarray, paths: PathSet) -> np.ndarray:
    """Closed-form DD input-output map for integer-Doppler channels.

    Each path shifts the grid cyclically by (delay, doppler) and applies the
    delay-dependent phase plus the wrap phase from quasi-periodicity.
    """
    if not paths.is_integer_doppler:
        raise ValueError("integer-Doppler input-output form needs integer dopplers")
    x_dd = np.asarray(x_dd, dtype=np.complex128)
    m, n = paths.frame.m, paths.frame.n
    if x_dd.shape != (m, n):
        raise ValueError(f"grid shape {x_dd.shape} != ({m}, {n})")
    mn = m * n
    ll = np.arange(m)[:, None]
    kk = np.arange(n)[None, :]
    y = np.zeros((m, n), dtype=np.complex128)
    for h, l_p, nu in zip(paths.gains, paths.delays, paths.dopplers.astype(int)):
        shifted = np.roll(np.roll(x_dd, l_p, axis=0), nu, axis=1)
        phase = np.exp(2j * np.pi * nu * (ll - l_p) / mn)
        alpha = np.where(ll - l_p >= 0, 1.0, np.exp(-2j * np.pi * (kk - nu) / n))
        y += h * alpha * phase * shifted
    return y


def _doppler_leakage_kernel(z: np.ndarray, n: int) -> np.ndarray:
    """Periodic Dirichlet kernel ``e^{j pi (N-1) z / N} sin(pi z)/sin(pi z / N)``.

    Evaluates to exactly N at integer multiples of N (the integer-Doppler
    limit) and to 0 at all other integers.
    """
    z = np.asarray(z, dtype=float)
    denom = np.sin(np.pi * z / n)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.sin(np.pi * z) / denom
    phase = np.exp(1j * np.pi * (n - 1) * z / n)
    out = phase * ratio
    on_grid = np.isclose(np.abs(denom), 0.0, atol=1e-12)
    return np.where(on_grid, float(n) + 0j, out)


def dd_io_fractional(x_dd: np.ndarray, paths: PathSet) -> np.ndarray:
    """Closed-form DD input-output map with Doppler leakage.

    Fractional Doppler smears each path's contribution across the Doppler
    axis with a Dirichlet kernel; integer Doppler collapses to
    :func:`dd_io_integer`.
    """
    x_dd = np.asarray(x_dd, dtype=np.complex128)
    m, n = paths.frame.m, paths.frame.n
    if x_dd.shape != (m, n):
        raise ValueError(f"grid shape {x_dd.shape} != ({m}, {n})")
    mn = m * n
    ll = np.arange(m)[:, None]
    kk = np.arange(n)
    y = np.zeros((m, n), dtype=np.complex128)
    for h, l_p, nu in zip(paths.gains, paths.delays, paths.dopplers):
        rolled = np.roll(x_dd, l_p, axis=0)  # rolled[l, k'] = x[[l - l_p]_M, k']
        # leakage weights w[k, k'] = kernel(nu - (k - k'))
        w = _doppler_leakage_kernel(nu - (kk[:, None] - kk[None, :]), n)
        mixed = rolled @ w.T  # [l, k] = sum_k' rolled[l, k'] w[k, k']
        phase = np.exp(2j * np.pi * nu * (ll - l_p) / mn)
        alpha = np.where(
            ll - l_p >= 0, 1.0, np.exp(-2j * np.pi * (kk[None, :] - nu) / n)
        )
        y += (h / n) * alpha * phase * mixed
    return y


def generate_channel(
    p: int,
    l_max: int,
    k_max: float,
    frame: FrameParams,
    rng: np.random.Generator,
    profile: str = "uniform",
    decay: float = 0.1,
    fractional: bool = False,
    distinct_delays: bool = False,
) -> PathSet:
    """Draw a random path set with unit mean total energy.

    Delays are uniform on {0..l_max} (without replacement when
    ``distinct_delays``), Dopplers uniform on [-k_max, k_max] (rounded to
    integers unless ``fractional``).  Gains are complex Gaussian, weighted by
    ``profile`` ("uniform", or "exponential" with ``exp(-decay * delay)``),
    normalized so the expected total path power is 1.
    """
    if p < 1:
        raise ValueError("need at least one path")
    if l_max > frame.m - 1:
        raise ValueError("l_max exceeds M - 1")
    if k_max > frame.n / 2:
        raise ValueError("k_max exceeds N / 2")
    if distinct_delays:
        if l_max + 1 < p:
            raise ValueError("distinct delays need l_max + 1 >= P")
        delays = rng.choice(l_max + 1, size=p, replace=False)
    else:
        delays = rng.integers(0, l_max + 1, size=p)
    dopplers = rng.uniform(-k_max, k_max, size=p)
    if not fractional:
        dopplers = np.round(dopplers)
    if profile == "uniform":
        weights = np.full(p, 1.0 / p)
    elif profile == "exponential":
        weights = np.exp(-decay * delays.astype(float))
        weights /= weights.sum()
    else:
        raise ValueError(f"unknown power profile {profile!r}")
    noise = (rng.standard_normal(p) + 1j * rng.standard_normal(p)) / np.sqrt(2)
    gains = np.sqrt(weights) * noise
    return PathSet(gains, delays, dopplers, frame)


# ---------------------------------------------------------------------------
# Continuous scattering profiles and their second-order descriptors
# ---------------------------------------------------------------------------


class ProfileKind(Enum):
    UNIFORM_DELAY_UNIFORM_DOPPLER = "uniform"
    EXPONENTIAL_DELAY_JAKES_DOPPLER = "exp-jakes"


@dataclass(frozen=True)
class ScatteringProfile:
    """Separable delay/Doppler scattering density.

    ``tau0`` is the delay extent (uniform) or decay constant (exponential);
    ``nu_max`` the maximum Doppler; ``rho2_pl`` the total path power.
    """

    kind: ProfileKind
    tau0: float
    nu_max: float
    rho2_pl: float = 1.0

    def __post_init__(self):
        if self.tau0 <= 0 or self.nu_max <= 0 or self.rho2_pl <= 0:
            raise ValueError("profile parameters must be positive")

    def delay_density(self, tau: float) -> float:
        if self.kind is ProfileKind.UNIFORM_DELAY_UNIFORM_DOPPLER:
            return self.rho2_pl / self.tau0 if 0.0 <= tau <= self.tau0 else 0.0
        return self.rho2_pl / self.tau0 * np.exp(-tau / self.tau0) if tau >= 0 else 0.0

    def doppler_density(self, nu: float) -> float:
        if abs(nu) >= self.nu_max:
            return 0.0
        if self.kind is ProfileKind.UNIFORM_DELAY_UNIFORM_DOPPLER:
            return self.rho2_pl / (2.0 * self.nu_max)
        return self.rho2_pl / (np.pi * np.sqrt(self.nu_max**2 - nu**2))


def _delay_moments(profile: ScatteringProfile) -> tuple[float, float, float]:
    upper = profile.tau0 if profile.kind is ProfileKind.UNIFORM_DELAY_UNIFORM_DOPPLER else np.inf
    total, _ = integrate.quad(profile.delay_density, 0, upper, epsrel=1e-10)
    mean, _ = integrate.quad(lambda t: t * profile.delay_density(t), 0, upper, epsrel=1e-10)
    mean /= total
    var, _ = integrate.quad(
        lambda t: (t - mean) ** 2 * profile.delay_density(t), 0, upper, epsrel=1e-10
    )
    return total, mean, np.sqrt(var / total)


def _doppler_moments(profile: ScatteringProfile) -> tuple[float, float, float]:
    if profile.kind is ProfileKind.UNIFORM_DELAY_UNIFORM_DOPPLER:
        total, _ = integrate.quad(
            profile.doppler_density, -profile.nu_max, profile.nu_max, epsrel=1e-10
        )
        mean, _ = integrate.quad(
            lambda v: v * profile.doppler_density(v),
            -profile.nu_max,
            profile.nu_max,
            epsrel=1e-10,
        )
        mean /= total
        var, _ = integrate.quad(
            lambda v: (v - mean) ** 2 * profile.doppler_density(v),
            -profile.nu_max,
            profile.nu_max,
            epsrel=1e-10,
        )
        return total, mean, np.sqrt(var / total)
    # substitute nu = nu_max * sin(theta) to absorb the endpoint singularity
    nm = profile.nu_max
    total, _ = integrate.quad(lambda th: profile.rho2_pl / np.pi, -np.pi / 2, np.pi / 2)
    mean, _ = integrate.quad(
        lambda th: nm * np.sin(th) * profile.rho2_pl / np.pi, -np.pi / 2, np.pi / 2
    )
    mean /= total
    var, _ = integrate.quad(
        lambda th: (nm * np.sin(th) - mean) ** 2 * profile.rho2_pl / np.pi,
        -np.pi / 2,
        np.pi / 2,
        epsrel=1e-10,
    )
    return total, mean, np.sqrt(var / total)


def scattering_stats(profile: ScatteringProfile) -> dict[str, float]:
    """Path loss, delay/Doppler means and spreads, coherence time/bandwidth.

    Moments are computed by adaptive quadrature on the profile densities;
    coherence time and bandwidth are the reciprocal spreads.
    """
    pl_delay, mean_delay, delay_spread = _delay_moments(profile)
    pl_doppler, mean_doppler, doppler_spread = _doppler_moments(profile)
    if not np.isclose(pl_delay, pl_doppler, rtol=1e-6):
        raise ArithmeticError("delay and Doppler densities disagree on total power")
    return {
        "path_loss": pl_delay,
        "mean_delay": mean_delay,
        "mean_doppler": mean_doppler,
        "delay_spread": delay_spread,
        "doppler_spread": doppler_spread,
        "coherence_time": 1.0 / doppler_spread,
        "coherence_bandwidth": 1.0 / delay_spread,
    }


def tf_sampling_error_bound(
    delay_spread: float, doppler_spread: float, t: float, f: float
) -> float:
    """Normalized mean-squared reconstruction error bound for TF sampling
    with slot duration ``t`` and sub-carrier spacing ``f``:
    ``2 * (sigma_tau^2 f^2 + sigma_nu^2 t^2)``."""
    if min(delay_spread, doppler_spread, t, f) < 0:
        raise ValueError("all arguments must be non-negative")
    return 2.0 * (delay_spread**2 * f**2 + doppler_spread**2 * t**2)


def optimal_tf_sampling(
    delay_spread: float, doppler_spread: float, t: float, f: float
) -> tuple[float, float]:
    """Ratio ``t/f`` minimizing the sampling bound at fixed product ``t*f``,
    and the minimized bound ``2 t f sigma_tau sigma_nu``."""
    return delay_spread / doppler_spread, 2.0 * t * f * delay_spread * doppler_spread


def coherence_region_error(dt: float, df: float, t_c: float, f_c: float) -> float:
    """Mean-squared TF channel variation bound over a (dt, df) offset inside
    the coherence region: ``2 pi ((dt/T_c)^2 + (df/F_c)^2)``."""
    return 2.0 * np.pi * ((dt / t_c) ** 2 + (df / f_c) ** 2)

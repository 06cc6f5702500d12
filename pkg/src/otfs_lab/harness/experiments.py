"""Per-trial experiment bodies.

Each function evaluates one seeded trial and returns plain counters, so the
runner can schedule trials across workers and aggregate deterministically.
Trial seeds derive from (master seed, trial index) only; the worker layout
never touches the random streams.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from otfs_lab import channel as ch
from otfs_lab import isac as isac_mod
from otfs_lab import modem
from otfs_lab.analysis import average_coding_gain
from otfs_lab.coding import (
    STANDARD_CODES,
    Interleaver,
    bits_to_symbol_priors,
    conv_encode,
    turbo_equalize,
)
from otfs_lab.detect import (
    cross_domain_detect,
    hybrid_map_pic_detect,
    map_spa_detect,
    mmse_baseline,
    mrc_baseline,
)
from otfs_lab.harness.config import ExperimentConfig
from otfs_lab.transforms import FrameParams, unvec, vec


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, trial]))


def frame_params(config: ExperimentConfig) -> FrameParams:
    return FrameParams(config.frame.m, config.frame.n, config.frame.delta_f)


def draw_channel(config: ExperimentConfig, frame: FrameParams, rng) -> ch.PathSet:
    c = config.channel
    if c.kind == "identity":
        return ch.PathSet(np.array([1.0 + 0j]), np.array([0]), np.array([0.0]), frame)
    if c.kind == "fixed":
        gains = np.array(c.gains_re) + 1j * np.array(c.gains_im)
        return ch.PathSet(gains, np.array(c.delays), np.array(c.dopplers), frame)
    return ch.generate_channel(
        c.p,
        c.l_max,
        c.k_max,
        frame,
        rng,
        profile=c.profile,
        decay=c.decay,
        fractional=c.fractional,
        distinct_delays=c.distinct_delays,
    )


def _detect(config: ExperimentConfig, paths, y_dd, r_td, n0, const, prior=None):
    kind = config.detector.kind
    if kind == "mmse":
        h_dd = ch.dd_effective_channel(paths).matrix
        return mmse_baseline(y_dd.data, h_dd, n0, const)
    if kind == "mrc":
        h_dd = ch.dd_effective_channel(paths).matrix
        return mrc_baseline(y_dd.data, h_dd, const, n0)
    if kind == "map_spa":
        grid = unvec(y_dd.data, paths.frame)
        return map_spa_detect(grid, paths, const, n0, prior, config.detector.max_iters)
    if kind == "hybrid_map_pic":
        grid = unvec(y_dd.data, paths.frame)
        return hybrid_map_pic_detect(
            grid,
            paths,
            const,
            n0,
            config.detector.L,
            prior,
            config.detector.max_iters,
            config.detector.damping,
        )
    if kind == "cross_domain":
        return cross_domain_detect(
            r_td.data, paths, const, n0, config.detector.iterations
        )
    raise ValueError(f"unhandled detector {kind!r}")


@dataclass(frozen=True)
class TrialOutcome:
    errors: int
    total: int
    value: float = 0.0  # for mean-style metrics


def ber_trial(config: ExperimentConfig, snr_db: float, trial: int) -> TrialOutcome:
    """One frame: draw channel, transmit random symbols, count bit errors."""
    frame = frame_params(config)
    const = modem.constellation(config.constellation)
    rng = trial_rng(config.seed, trial)
    paths = draw_channel(config, frame, rng)
    indices = rng.integers(0, const.size, size=frame.mn)
    x = const.points[indices]
    n0 = modem.n0_from_esn0_db(snr_db)
    y_dd, r_td = modem.transmit(unvec(x, frame), paths, n0, rng)
    result = _detect(config, paths, y_dd, r_td, n0, const)
    tx_bits = const.indices_to_bits(indices)
    rx_bits = const.indices_to_bits(result.hard)
    return TrialOutcome(int(np.sum(tx_bits != rx_bits)), len(tx_bits))


def fer_coded_trial(config: ExperimentConfig, snr_db: float, trial: int) -> TrialOutcome:
    """One coded frame through turbo equalization; a frame error is any
    wrong information bit."""
    frame = frame_params(config)
    const = modem.constellation(config.constellation)
    code = STANDARD_CODES[config.code.name]
    rng = trial_rng(config.seed, trial)
    paths = draw_channel(config, frame, rng)
    n_coded = frame.mn * const.bits_per_symbol
    k_info = n_coded // code.n_out - code.memory
    info_bits = rng.integers(0, 2, size=k_info).astype(np.int8)
    coded = conv_encode(info_bits, code)
    interleaver = Interleaver(n_coded, int(rng.integers(0, 2**31)))
    sym = const.modulate_bits(interleaver.interleave(coded))
    n0 = modem.n0_from_esn0_db(snr_db)
    y_dd, r_td = modem.transmit(unvec(sym, frame), paths, n0, rng)

    def detector(prior):
        return _detect(config, paths, y_dd, r_td, n0, const, prior)

    decoded = turbo_equalize(
        detector, code, interleaver, const, n_coded, config.code.outer_iters
    )
    return TrialOutcome(int(np.any(decoded != info_bits)), 1)


def fer_uncoded_trial(config: ExperimentConfig, snr_db: float, trial: int) -> TrialOutcome:
    """Uncoded frame-error reference at matching frame size."""
    out = ber_trial(config, snr_db, trial)
    return TrialOutcome(int(out.errors > 0), 1)


def isac_sensing_trial(config: ExperimentConfig, snr_db: float, trial: int) -> TrialOutcome:
    """One sensing shot: precoded frames through the radar operator plus
    noise; a miss is any true receive angular index left out of the top-KP."""
    cfg, users = isac_mod.load_scenario(config.scenario)
    rng = trial_rng(config.seed, trial)
    targets = [t for user in users for t in user]
    n0_radar = cfg.alpha_total * 10.0 ** (-snr_db / 10.0)
    gains_sq = np.array([abs(t.radar_gain) ** 2 for t in targets])
    if config.power_allocation == "equal":
        per_path = np.full(
            len(targets), cfg.alpha_total / ((cfg.n_range + 1) * len(targets))
        )
    else:
        per_path = isac_mod.radar_power_allocation(gains_sq, cfg.alpha_total, cfg.n_range)
    alpha = np.zeros(cfg.n_bs)
    truth = []
    for tgt, power in zip(targets, per_path):
        a, a_tilde = isac_mod.angular_indices(tgt.aod, cfg.n_bs)
        for idx in isac_mod.beam_antenna_set(int(round(a)), cfg.n_range, cfg.n_bs):
            alpha[idx - 1] += power
        truth.append(int(round(a_tilde)))
    sensing = isac_mod.RadarSensingMatrix.from_targets(targets, cfg, alpha)
    const = modem.constellation(config.constellation)
    mn = cfg.frame.mn
    n_frames = max(1, config.detector.iterations)
    samples = np.empty((n_frames, cfg.n_bs * mn), dtype=np.complex128)
    from otfs_lab.transforms import dd_to_td_vec

    for f in range(n_frames):
        x = const.random_symbols(mn, rng)
        v = dd_to_td_vec(x, cfg.frame)
        # identical precoded stream on every antenna branch; beam selection
        # happens through the power allocation inside the sensing operator
        d = np.tile(v, cfg.n_bs)
        echo = sensing.apply(d)
        samples[f] = modem.awgn(echo, n0_radar, rng)
    est = isac_mod.aoa_estimate(samples, cfg, len(targets))
    miss = int(not set(truth).issubset(set(est.tolist())))
    return TrialOutcome(miss, 1)


def isac_fer_trial(config: ExperimentConfig, snr_db: float, trial: int) -> TrialOutcome:
    """Uncoded frame error for the first user of a spatially-spread link.

    Builds that user's effective DD channel from the scenario (equal power
    split, optional virtual-index precoding), transmits one random frame and
    MMSE-detects it.
    """
    cfg, users = isac_mod.load_scenario(config.scenario)
    rng = trial_rng(config.seed, trial)
    paths = users[0]
    frame = cfg.frame
    mn = frame.mn
    const = modem.constellation(config.constellation)
    comm_alpha = isac_mod.comm_power_allocation(1.0, len(paths))
    if config.precoding:
        precoders = isac_mod.precoding_matrices(
            np.array([t.delay for t in paths]),
            np.array([t.doppler for t in paths]),
            frame,
        )
    else:
        precoders = [isac_mod.ShiftPhasePrecoder(mn) for _ in paths]
    # effective DD channel: sum over paths of the precoded path operator
    from otfs_lab.analysis import path_operator_apply

    h_dd = np.zeros((mn, mn), dtype=np.complex128)
    eye = np.eye(mn, dtype=np.complex128)
    cols = np.empty((mn, mn), dtype=np.complex128)
    for tgt, w, a in zip(paths, precoders, comm_alpha):
        # fading gains are redrawn per trial; the scenario pins geometry only
        gain = (rng.standard_normal() + 1j * rng.standard_normal()) / np.sqrt(2 * len(paths))
        for j in range(mn):
            cols[:, j] = path_operator_apply(eye[:, j], tgt.delay, tgt.doppler, frame, w)
        h_dd += np.sqrt(a) * gain * cols
    indices = rng.integers(0, const.size, size=mn)
    x = const.points[indices]
    n0 = modem.n0_from_esn0_db(snr_db)
    y = h_dd @ x
    y = modem.awgn(y, n0, rng)
    det = mmse_baseline(y, h_dd, n0, const)
    return TrialOutcome(int(np.any(det.hard != indices)), 1)


def awgn_ber_reference(snr_db: float) -> float:
    """Closed-form BPSK bit error rate on the identity channel."""
    from scipy.special import erfc

    return float(0.5 * erfc(np.sqrt(10.0 ** (snr_db / 10.0))))


TRIAL_BODIES = {
    "ber": ber_trial,
    "fer_coded": fer_coded_trial,
    "fer_uncoded": fer_uncoded_trial,
    "isac_sensing": isac_sensing_trial,
}

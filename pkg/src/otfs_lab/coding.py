"""Convolutional coding stack: rate-1/2 feedforward encoders, free-distance
search, a log-domain BCJR decoder, seeded interleaving, and the turbo
equalization loop that couples a soft detector with the decoder.

LLR convention throughout: ``L = log P(bit = 0) - log P(bit = 1)``.
Coded bits map to BPSK as ``0 -> +1`` and ``1 -> -1``.  All exchanged LLRs
are clipped to ``+-LLR_CLIP``: trellis boundaries pin some coded bits, whose
infinite likelihood ratios would otherwise poison later soft arithmetic.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import logsumexp

from otfs_lab.detect.messages import DetectionResult
from otfs_lab.modem import Constellation

LLR_CLIP = 60.0
_APP_CEIL = 1e3


@dataclass(frozen=True)
class ConvCode:
    """Feedforward convolutional code given by generator polynomials.

    Each generator is a bitmask whose bit ``i`` is the coefficient of
    ``D^i``; ``memory`` is the largest degree.  Encoding is terminated: the
    ``memory`` flush bits drive the register back to the zero state.
    """

    name: str
    generators: tuple[int, ...]
    recursive: bool = False
    terminated: bool = True

    def __post_init__(self):
        if len(self.generators) < 2:
            raise ValueError("need at least two generator polynomials")
        if self.recursive:
            raise NotImplementedError("only feedforward encoders are supported")

    @property
    def memory(self) -> int:
        return max(g.bit_length() for g in self.generators) - 1

    @property
    def n_out(self) -> int:
        return len(self.generators)

    @property
    def rate(self) -> float:
        return 1.0 / self.n_out


#: the four reference codes, ordered by minimum squared Euclidean distance.
CODE_A = ConvCode("A", (0b11, 0b10))  # [1+D, D]
CODE_B = ConvCode("B", (0b101, 0b111))  # [1+D^2, 1+D+D^2]
CODE_C = ConvCode("C", (0b100101, 0b111111))
CODE_D = ConvCode("D", (0b1100111, 0b1011101))

STANDARD_CODES = {"A": CODE_A, "B": CODE_B, "C": CODE_C, "D": CODE_D}


def _parity(x: int) -> int:
    return bin(x).count("1") & 1


@dataclass(frozen=True)
class _Trellis:
    n_states: int
    next_state: np.ndarray  # (n_states, 2)
    outputs: np.ndarray  # (n_states, 2, n_out) coded bits

    @classmethod
    def build(cls, code: ConvCode) -> "_Trellis":
        m = code.memory
        n_states = 1 << m
        nxt = np.zeros((n_states, 2), dtype=int)
        out = np.zeros((n_states, 2, code.n_out), dtype=np.int8)
        mask = n_states - 1
        for s in range(n_states):
            for b in (0, 1):
                reg = b | (s << 1)
                nxt[s, b] = ((s << 1) | b) & mask
                for j, g in enumerate(code.generators):
                    out[s, b, j] = _parity(g & reg)
        return cls(n_states, nxt, out)


def conv_encode(bits: np.ndarray, code: ConvCode) -> np.ndarray:
    """Encode and terminate: output length ``n_out * (len(bits) + memory)``."""
    bits = np.asarray(bits, dtype=np.int8)
    if bits.ndim != 1 or len(bits) < 1:
        raise ValueError("bits must be a non-empty 1-D array")
    trellis = _Trellis.build(code)
    state = 0
    out = np.empty((len(bits) + code.memory, code.n_out), dtype=np.int8)
    for t, b in enumerate(np.concatenate([bits, np.zeros(code.memory, dtype=np.int8)])):
        out[t] = trellis.outputs[state, b]
        state = trellis.next_state[state, b]
    assert state == 0, "terminated trellis must end in the zero state"
    return out.reshape(-1)


def min_euclidean_distance(code: ConvCode, search_depth: int | None = None) -> float:
    """Minimum squared Euclidean distance over BPSK-mapped codeword pairs.

    Equal to four times the free Hamming distance (each differing coded bit
    contributes ``(+-2)^2``); found by a shortest-path sweep over the
    trellis for paths that leave and re-merge with the zero state.
    """
    if search_depth is None:
        search_depth = 12 * (code.memory + 1)
    if search_depth < 3 * code.memory:
        raise ValueError("search depth too small to re-merge")
    trellis = _Trellis.build(code)
    inf = np.inf
    weight = np.full(trellis.n_states, inf)
    best = inf
    # diverge from the zero state with an input 1
    s1 = trellis.next_state[0, 1]
    if s1 == 0:  # memoryless code: the diverging branch re-merges at once
        best = trellis.outputs[0, 1].sum()
    else:
        weight[s1] = trellis.outputs[0, 1].sum()
    for _ in range(search_depth):
        new = np.full(trellis.n_states, inf)
        for s in range(trellis.n_states):
            if weight[s] == inf:
                continue
            for b in (0, 1):
                w = weight[s] + trellis.outputs[s, b].sum()
                ns = trellis.next_state[s, b]
                if ns == 0:
                    best = min(best, w)
                elif w < new[ns]:
                    new[ns] = w
        weight = new
    return 4.0 * best


def bcjr_decode(
    channel_llrs: np.ndarray,
    code: ConvCode,
    info_priors: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Log-domain forward/backward decoding of one terminated codeword.

    ``channel_llrs`` holds one LLR per coded bit.  Returns the a-posteriori
    LLRs of the information bits and the extrinsic LLRs of the coded bits
    (a-posteriori minus the channel input).  The log-sum is exact, no
    max-log approximation.
    """
    llr = np.asarray(channel_llrs, dtype=float)
    n_out = code.n_out
    if len(llr) % n_out:
        raise ValueError("coded LLR length must be a multiple of the output count")
    steps = len(llr) // n_out
    k_info = steps - code.memory
    if k_info < 1:
        raise ValueError("codeword too short for this code")
    if info_priors is None:
        info_priors = np.zeros(k_info)
    info_priors = np.asarray(info_priors, dtype=float)
    if len(info_priors) != k_info:
        raise ValueError("one prior LLR per information bit required")

    trellis = _Trellis.build(code)
    ns = trellis.n_states
    llr_steps = llr.reshape(steps, n_out)
    # branch metrics: log p(coded bits) + log p(input bit)
    sign = 1.0 - 2.0 * trellis.outputs  # (ns, 2, n_out), +1 for bit 0
    gamma = 0.5 * np.einsum("sbj,tj->tsb", sign, llr_steps)
    for t in range(k_info):
        gamma[t, :, 0] += 0.5 * info_priors[t]
        gamma[t, :, 1] -= 0.5 * info_priors[t]

    neg_inf = -np.inf
    alpha = np.full((steps + 1, ns), neg_inf)
    alpha[0, 0] = 0.0
    for t in range(steps):
        nxt = np.full(ns, neg_inf)
        b_range = (0,) if t >= k_info else (0, 1)
        for b in b_range:
            cand = alpha[t] + gamma[t, :, b]
            np.logaddexp.at(nxt, trellis.next_state[:, b], cand)
        alpha[t + 1] = nxt - nxt.max()

    beta = np.full((steps + 1, ns), neg_inf)
    beta[steps, 0] = 0.0
    for t in range(steps - 1, -1, -1):
        b_range = (0,) if t >= k_info else (0, 1)
        cur = np.full(ns, neg_inf)
        for b in b_range:
            cand = gamma[t, :, b] + beta[t + 1, trellis.next_state[:, b]]
            cur = np.logaddexp(cur, cand)
        beta[t] = cur - cur.max()

    # transition metrics for every step at once: (steps, ns, 2)
    metrics = alpha[:steps, :, None] + gamma + beta[1:, trellis.next_state]
    metrics[k_info:, :, 1] = neg_inf  # tail inputs are pinned to zero

    def _lse(a: np.ndarray, axis) -> np.ndarray:
        peak = np.max(a, axis=axis, keepdims=True)
        peak = np.where(np.isfinite(peak), peak, 0.0)
        return np.squeeze(peak, axis=axis) + np.log(
            np.sum(np.exp(a - peak), axis=axis)
        )

    with np.errstate(divide="ignore"):
        info_llrs = (
            _lse(metrics[:k_info, :, 0], axis=1) - _lse(metrics[:k_info, :, 1], axis=1)
        )
        app_coded = np.empty((steps, n_out))
        for j in range(n_out):
            mask0 = trellis.outputs[:, :, j] == 0  # (ns, 2)
            app_coded[:, j] = _lse(
                np.where(mask0[None], metrics, neg_inf), axis=(1, 2)
            ) - _lse(np.where(mask0[None], neg_inf, metrics), axis=(1, 2))
    # boundary steps can pin coded bits, making their app infinite; bound the
    # app far above LLR_CLIP so saturation cannot cancel against the input
    app_coded = np.clip(app_coded.reshape(-1), -_APP_CEIL, _APP_CEIL)
    extrinsic_coded = np.clip(app_coded - llr, -LLR_CLIP, LLR_CLIP)
    return np.clip(info_llrs, -_APP_CEIL, _APP_CEIL), extrinsic_coded


class Interleaver:
    """Seeded uniform random permutation of a fixed length."""

    def __init__(self, length: int, seed: int):
        self.length = length
        self.permutation = np.random.default_rng(seed).permutation(length)
        self._inverse = np.argsort(self.permutation)

    def interleave(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x)[self.permutation]

    def deinterleave(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x)[self._inverse]


def bits_to_symbol_priors(llrs: np.ndarray, constellation: Constellation) -> np.ndarray:
    """Per-symbol prior probability rows from per-bit LLRs."""
    bps = constellation.bits_per_symbol
    llrs = np.asarray(llrs, dtype=float).reshape(-1, bps)
    sign = 1.0 - 2.0 * constellation.bits.astype(float)  # (size, bps)
    logp = 0.5 * llrs @ sign.T
    logp -= logsumexp(logp, axis=1, keepdims=True)
    return np.exp(logp)


def posteriors_to_bit_llrs(
    posteriors: np.ndarray, constellation: Constellation
) -> np.ndarray:
    """Per-bit LLRs from per-symbol posterior probability rows."""
    logp = np.log(np.maximum(np.asarray(posteriors, dtype=float), 1e-300))
    bits = constellation.bits  # (size, bps)
    out = np.empty((logp.shape[0], constellation.bits_per_symbol))
    for b in range(constellation.bits_per_symbol):
        mask0 = bits[:, b] == 0
        out[:, b] = logsumexp(logp[:, mask0], axis=1) - logsumexp(logp[:, ~mask0], axis=1)
    return out.reshape(-1)


def turbo_equalize(
    detector: Callable[[np.ndarray | None], DetectionResult],
    code: ConvCode,
    interleaver: Interleaver,
    constellation: Constellation,
    n_coded_bits: int,
    outer_iters: int = 2,
) -> np.ndarray:
    """Iterate detector and decoder, exchanging extrinsic bit information.

    ``detector`` maps a per-symbol prior matrix (or None for uniform) to a
    :class:`DetectionResult` on the same frame.  Coded bits are interleaved
    before symbol mapping, so the decoder sees de-interleaved LLRs.  Returns
    the hard information-bit decisions of the final decoder pass.
    """
    if n_coded_bits != interleaver.length:
        raise ValueError("interleaver length must match the coded block")
    if n_coded_bits % code.n_out:
        raise ValueError("coded block length incompatible with the code rate")
    prior_matrix = None
    prior_bit_llrs = np.zeros(n_coded_bits)
    info_llrs = None
    for _ in range(outer_iters):
        result = detector(prior_matrix)
        app_bits = posteriors_to_bit_llrs(result.posteriors, constellation)
        det_extrinsic = np.clip(app_bits - prior_bit_llrs, -LLR_CLIP, LLR_CLIP)
        info_llrs, code_extrinsic = bcjr_decode(
            interleaver.deinterleave(det_extrinsic), code
        )
        prior_bit_llrs = interleaver.interleave(code_extrinsic)
        prior_matrix = bits_to_symbol_priors(prior_bit_llrs, constellation)
    return (info_llrs < 0).astype(np.int8)

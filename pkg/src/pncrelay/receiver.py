"""Iterative detection / decoding / refinement loop at one relay."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channel import band_truncate, depth_profile
from .codec import (
    BPSK,
    DEFAULT_INTERLEAVER_SEED,
    Constellation,
    Interleaver,
    LdpcCode,
    bit_pairs_to_symbols,
    build_qc_ldpc,
    joint_gspa_decode,
    symbols_to_bit_pairs,
)
from .detection import AcaFgdDetector, ReceivedFrame, sm_lmmse_detect, uniform_prior
from .refinement import BeliefState, refine, update_belief_weights

__all__ = ["SCHEMES", "ReceiverConfig", "RelayOutput", "receive", "demap_to_bits", "remap_to_symbols"]

SCHEMES = ("aca_fgd", "sm_lmmse", "fixed_d")


@dataclass(frozen=True)
class ReceiverConfig:
    scheme: str = "aca_fgd"
    fixed_depth: int = 1
    outer_iterations: int = 5
    decode_iterations: int = 3
    refinement_enabled: bool = False
    eta: float = 0.9
    alpha: float = 1.0
    beta: float = 5.0
    early_exit_on_zero_syndrome: bool = True
    max_depth: int = 3
    sweeps: int = 1
    persist_messages: bool = False
    lmmse_depth_selection: bool = False

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if self.outer_iterations < 1:
            raise ValueError("outer_iterations must be >= 1")
        if self.decode_iterations < 1:
            raise ValueError("decode_iterations must be >= 1")
        if not 0 < self.eta <= 1:
            raise ValueError(f"eta must lie in (0, 1], got {self.eta}")
        if self.fixed_depth < 0 or self.max_depth < 0:
            raise ValueError("depths must be nonnegative")
        if self.sweeps < 1:
            raise ValueError("sweeps must be >= 1")
        if not (self.alpha > 0 and self.beta > 0):
            raise ValueError("alpha and beta must be positive")

    @property
    def label(self) -> str:
        return f"fixed_d{self.fixed_depth}" if self.scheme == "fixed_d" else self.scheme


@dataclass
class RelayOutput:
    c_R: np.ndarray
    syndrome: np.ndarray
    iterations: int
    diagnostics: list = field(default_factory=list)
    posterior: np.ndarray | None = None


def demap_to_bits(p_sym, interleaver: Interleaver, bits_per_symbol: int = 1) -> np.ndarray:
    """Subcarrier joint distributions to deinterleaved joint bit-pair distributions."""
    return interleaver.deinterleave(symbols_to_bit_pairs(p_sym, bits_per_symbol))


def remap_to_symbols(p_bits, interleaver: Interleaver, bits_per_symbol: int = 1) -> np.ndarray:
    return bit_pairs_to_symbols(interleaver.interleave(p_bits), bits_per_symbol)


def _make_detector(frame, H_A, H_B, config: ReceiverConfig, constellation):
    if config.scheme == "sm_lmmse":
        if config.lmmse_depth_selection:
            d = depth_profile(H_A, H_B, config.eta)
            H_A, H_B = band_truncate(H_A, d), band_truncate(H_B, d)
        return lambda prior: sm_lmmse_detect(frame, H_A, H_B, prior, constellation)
    depths = None
    if config.scheme == "fixed_d":
        depths = np.full(np.asarray(frame.y).shape[0], config.fixed_depth)
    det = AcaFgdDetector(
        frame,
        H_A,
        H_B,
        eta=config.eta,
        depths=depths,
        sweeps=config.sweeps,
        max_depth=None if config.scheme == "fixed_d" else config.max_depth,
        persist_messages=config.persist_messages,
        constellation=constellation,
    )
    return det.detect


def receive(
    frame: ReceivedFrame,
    H_A,
    H_B,
    config: ReceiverConfig = ReceiverConfig(),
    code: LdpcCode | None = None,
    interleaver: Interleaver | None = None,
    constellation: Constellation = BPSK,
) -> RelayOutput:
    """Run the relay's outer loop and return the network-coded word c_R.

    Each outer iteration detects with the current prior, deinterleaves,
    runs the joint decoder, optionally refines its posterior and feeds the
    result back (interleaved) as the next detector prior.  The first prior
    is uniform.  ``code`` and ``interleaver`` default to the standard
    rate-1/3 code and its seeded permutation.
    """
    if code is None:
        code = build_qc_ldpc()
    if interleaver is None:
        interleaver = Interleaver(code.block_length, DEFAULT_INTERLEAVER_SEED)
    Q = constellation.bits_per_symbol
    N = np.asarray(frame.y).shape[0]
    if N * Q != code.block_length:
        raise ValueError(f"{N} subcarriers x Q={Q} does not match block length {code.block_length}")
    detect = _make_detector(frame, H_A, H_B, config, constellation)
    prior = uniform_prior(N, constellation)
    belief = BeliefState.initial(code.block_length, config.alpha, config.beta)
    diagnostics = []
    result = None
    it = 0
    for it in range(1, config.outer_iterations + 1):
        p_sym = detect(prior)
        p_bits = demap_to_bits(p_sym, interleaver, Q)
        result = joint_gspa_decode(code, p_bits, config.decode_iterations)
        diagnostics.append(
            {
                "symbol_error_proxy": float(np.mean(1.0 - p_sym.max(axis=1))),
                "syndrome_weight": int(result.syndrome.sum()),
            }
        )
        if config.early_exit_on_zero_syndrome and not result.syndrome.any():
            break
        feedback = result.posterior
        if config.refinement_enabled:
            belief = update_belief_weights(belief, code.H, result.syndrome)
            feedback = refine(feedback, belief)
        prior = remap_to_symbols(feedback, interleaver, Q)
    return RelayOutput(result.c_R, result.syndrome, it, diagnostics, result.posterior)

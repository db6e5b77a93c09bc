"""Monte-Carlo engine: multiple-access hops, multi-hop accumulation, sweeps.

Seeding scheme
--------------
Every frame of every grid point gets its own generator,
``np.random.default_rng([master_seed, i_sigma, i_snr, i_cer, i_mr, frame])``
where the ``i_*`` are indices into the corresponding grids.  A point can
therefore be rerun in isolation, and two schemes (or refinement on/off) run
with the same master seed see exactly the same bits, channels and noise.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Iterator

import numpy as np

from .channel import (
    ChannelStatParams,
    OfdmParams,
    build_channel_matrix,
    draw_paths,
    perturb_channel,
)
from .codec import (
    BPSK,
    DEFAULT_INTERLEAVER_SEED,
    Constellation,
    Interleaver,
    build_qc_ldpc,
    encode,
    map_symbols,
)
from .detection import ReceivedFrame
from .receiver import ReceiverConfig, receive

__all__ = [
    "CodeParams",
    "SimConfig",
    "SimRecord",
    "HopResult",
    "HopInputs",
    "draw_hop",
    "point_seed",
    "run_hop",
    "run_multihop_trial",
    "run_point",
    "iter_sweep",
    "ber_sweep",
    "odd_parity_probability",
    "energy_contribution_table",
]


@dataclass(frozen=True)
class CodeParams:
    block_length: int = 336
    info_length: int = 112
    construction_seed: int = 1
    interleaver_seed: int = DEFAULT_INTERLEAVER_SEED


@dataclass(frozen=True)
class SimConfig:
    ofdm: OfdmParams = OfdmParams()
    channel: ChannelStatParams = ChannelStatParams()
    receiver: ReceiverConfig = ReceiverConfig()
    code: CodeParams = CodeParams()
    snr_grid_db: tuple = (8.0,)
    sigma_u_grid: tuple = (0.1,)
    relay_counts: tuple = (1,)
    cer_grid_db: tuple = (None,)
    frames_per_point: int = 500
    master_seed: int = 0
    timing: bool = False

    def __post_init__(self):
        if self.frames_per_point < 1:
            raise ValueError("frames_per_point must be >= 1")
        for name in ("snr_grid_db", "sigma_u_grid", "relay_counts", "cer_grid_db"):
            if len(getattr(self, name)) == 0:
                raise ValueError(f"{name} must be nonempty")
        if any(int(r) < 1 for r in self.relay_counts):
            raise ValueError("relay_counts entries must be >= 1")
        if any(s < 0 for s in self.sigma_u_grid):
            raise ValueError("sigma_u_grid entries must be >= 0")
        if self.ofdm.num_subcarriers * self.ofdm.bits_per_symbol != self.code.block_length:
            raise ValueError("num_subcarriers * bits_per_symbol must equal the code block length")
        if self.master_seed < 0:
            raise ValueError("master_seed must be nonnegative")

    @cached_property
    def ldpc(self):
        return build_qc_ldpc(
            self.code.block_length, self.code.info_length, self.code.construction_seed
        )

    @cached_property
    def interleaver(self) -> Interleaver:
        return Interleaver(self.code.block_length, self.code.interleaver_seed)

    @property
    def constellation(self) -> Constellation:
        return BPSK if self.ofdm.bits_per_symbol == 1 else Constellation.qam(self.ofdm.bits_per_symbol)


@dataclass
class SimRecord:
    scheme: str
    snr_db: float
    sigma_u: float
    relay_count: int
    outer_iterations: int
    decode_iterations: int
    refinement: bool
    cer_db: float | None
    frames_total: int = 0
    bits_total: int = 0
    bit_errors: int = 0
    frame_errors: int = 0
    wall_time_s: float | None = None
    error: str | None = None

    @property
    def ber(self) -> float:
        return self.bit_errors / self.bits_total if self.bits_total else math.nan

    @property
    def fer(self) -> float:
        return self.frame_errors / self.frames_total if self.frames_total else math.nan


@dataclass
class HopResult:
    error_pattern: np.ndarray
    iterations: int
    diagnostics: list = field(default_factory=list)


def point_seed(master_seed: int, indices, frame: int) -> list[int]:
    """Seed sequence entropy for one frame of one grid point."""
    return [int(master_seed), *(int(i) for i in indices), int(frame)]


@dataclass
class HopInputs:
    c_A: np.ndarray
    c_B: np.ndarray
    H_A: object
    H_B: object
    est_A: object
    est_B: object
    frame: ReceivedFrame


def draw_hop(
    rng: np.random.Generator,
    config: SimConfig,
    snr_db: float,
    sigma_u: float,
    cer_db: float | None = None,
    noise_variance: float | None = None,
) -> HopInputs:
    """Bits, channels, receiver-side channel estimates and the received frame of one hop.

    Both links draw independent paths with the same statistics.  The noise
    variance is 10**(-snr_db/10) unless ``noise_variance`` is given.
    """
    code, pi_, const = config.ldpc, config.interleaver, config.constellation
    K, N = code.info_length, config.ofdm.num_subcarriers
    c_A = encode(code, rng.integers(0, 2, K))
    c_B = encode(code, rng.integers(0, 2, K))
    x_A = map_symbols(pi_.interleave(c_A), const)
    x_B = map_symbols(pi_.interleave(c_B), const)
    stats = replace(config.channel, velocity_deviation_mps=sigma_u)
    H_A = build_channel_matrix(draw_paths(rng, stats, config.ofdm.cp_duration_s), config.ofdm)
    H_B = build_channel_matrix(draw_paths(rng, stats, config.ofdm.cp_duration_s), config.ofdm)
    est_A = perturb_channel(H_A, cer_db, rng)
    est_B = perturb_channel(H_B, cer_db, rng)
    sigma2 = 10.0 ** (-snr_db / 10.0) if noise_variance is None else noise_variance
    w = math.sqrt(sigma2 / 2) * (rng.standard_normal(N) + 1j * rng.standard_normal(N))
    y = H_A.entries @ x_A + H_B.entries @ x_B + w
    return HopInputs(c_A, c_B, H_A, H_B, est_A, est_B, ReceivedFrame(y, sigma2))


def run_hop(
    rng: np.random.Generator,
    config: SimConfig,
    snr_db: float,
    sigma_u: float,
    cer_db: float | None = None,
    noise_variance: float | None = None,
) -> HopResult:
    """One multiple-access phase: both end nodes transmit, the relay decodes c_A xor c_B."""
    h = draw_hop(rng, config, snr_db, sigma_u, cer_db, noise_variance)
    out = receive(
        h.frame, h.est_A, h.est_B, config.receiver, config.ldpc, config.interleaver,
        config.constellation,
    )
    return HopResult(out.c_R ^ h.c_A ^ h.c_B, out.iterations, out.diagnostics)


def run_multihop_trial(rng, config: SimConfig, mr: int, snr_db, sigma_u, cer_db=None, hop=None):
    """XOR of ``mr`` independent hop error patterns.

    A bit reaches the end node flipped iff an odd number of hops flipped it.
    ``hop`` replaces :func:`run_hop` (used to inject synthetic error patterns).
    """
    if mr < 1:
        raise ValueError("mr must be >= 1")
    hop = hop or (lambda r: run_hop(r, config, snr_db, sigma_u, cer_db).error_pattern)
    err = np.asarray(hop(rng), dtype=np.uint8).copy()
    for _ in range(mr - 1):
        err ^= np.asarray(hop(rng), dtype=np.uint8)
    return err


def odd_parity_probability(p: float, mr: int) -> float:
    """P(odd number of flips among mr independent Bernoulli(p) hops)."""
    return 0.5 * (1.0 - (1.0 - 2.0 * p) ** mr)


def _grid(config: SimConfig):
    for i_s, sigma_u in enumerate(config.sigma_u_grid):
        for i_n, snr in enumerate(config.snr_grid_db):
            for i_c, cer in enumerate(config.cer_grid_db):
                for i_r, mr in enumerate(config.relay_counts):
                    yield (i_s, i_n, i_c, i_r), (float(snr), float(sigma_u), cer, int(mr))


def run_point(config: SimConfig, indices, snr_db, sigma_u, cer_db, mr) -> SimRecord:
    rc = config.receiver
    rec = SimRecord(
        rc.label, snr_db, sigma_u, mr, rc.outer_iterations, rc.decode_iterations,
        rc.refinement_enabled, cer_db,
    )
    t0 = time.perf_counter()
    try:
        for f in range(config.frames_per_point):
            rng = np.random.default_rng(point_seed(config.master_seed, indices, f))
            err = run_multihop_trial(rng, config, mr, snr_db, sigma_u, cer_db)
            n_err = int(err.sum())
            rec.frames_total += 1
            rec.bits_total += err.size
            rec.bit_errors += n_err
            rec.frame_errors += n_err > 0
    except Exception as exc:  # recorded per point; the sweep carries on
        rec.error = f"{type(exc).__name__}: {exc}"
    if config.timing:
        rec.wall_time_s = time.perf_counter() - t0
    return rec


def _run_point_args(args):
    return run_point(*args)


def iter_sweep(config: SimConfig, workers: int = 1) -> Iterator[SimRecord]:
    """Yield one record per grid point, in grid order, as points finish."""
    jobs = [(config, idx, *vals) for idx, vals in _grid(config)]
    if workers <= 1:
        for job in jobs:
            yield run_point(*job)
        return
    with ProcessPoolExecutor(max_workers=workers) as pool:
        yield from pool.map(_run_point_args, jobs)


def ber_sweep(config: SimConfig, workers: int = 1) -> list[SimRecord]:
    return list(iter_sweep(config, workers))


def energy_contribution_table(
    sigma_u_list,
    depth_list,
    realizations: int,
    rng: np.random.Generator,
    ofdm: OfdmParams = OfdmParams(),
    channel: ChannelStatParams = ChannelStatParams(),
    subtract_overlap: bool = False,
) -> np.ndarray:
    """Percent of channel energy captured by a uniform ICI depth.

    Entry ``[i, j]`` is the ratio of band energy (summed over subcarriers and
    realizations) to the matching total, for ``sigma_u_list[i]`` and depth
    ``depth_list[j]``, in percent.
    """
    if realizations < 1:
        raise ValueError("realizations must be >= 1")
    depth_list = [int(d) for d in depth_list]
    out = np.zeros((len(sigma_u_list), len(depth_list)))
    Dmax = max(depth_list)
    for i, s in enumerate(sigma_u_list):
        stats = replace(channel, velocity_deviation_mps=float(s))
        num = np.zeros(len(depth_list))
        den = np.zeros(len(depth_list))
        for _ in range(realizations):
            H = build_channel_matrix(draw_paths(rng, stats, ofdm.cp_duration_s), ofdm).entries
            n, d = _aggregate_band_energy(H, depth_list, Dmax, subtract_overlap)
            num += n
            den += d
        out[i] = 100.0 * num / den
    return out


def _aggregate_band_energy(H, depth_list, Dmax, subtract_overlap):
    """Summed numerator and denominator of the per-subcarrier energy ratio."""
    E = np.abs(H) ** 2
    N = E.shape[0]
    diag = np.trace(E)
    tot = 2.0 * E.sum() - (diag if subtract_overlap else 0.0)
    num, den = [], []
    n_idx = np.arange(N)
    off = np.abs(n_idx[:, None] - n_idx[None, :])
    for D in depth_list:
        band = E[off <= D].sum()
        num.append(2.0 * band - (diag if subtract_overlap else 0.0))
        den.append(tot)
    return np.array(num), np.array(den)

"""Multi-scale multi-lag underwater acoustic channel and its OFDM coupling matrix.

Each link is a sum of discrete paths with their own amplitude, delay and
Doppler scale factor.  After OFDM demodulation the link becomes an N x N
complex matrix ``H`` whose off-diagonal entries carry the inter-carrier
interference (ICI) caused by the per-path Doppler scaling.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "OfdmParams",
    "ChannelStatParams",
    "PathSet",
    "ChannelMatrix",
    "MeasuredCir",
    "DegenerateChannelError",
    "draw_paths",
    "ici_coefficient",
    "build_channel_matrix",
    "energy_ratio",
    "optimal_depths",
    "select_depth",
    "depth_profile",
    "band_truncate",
    "perturb_channel",
    "cir_to_frequency",
    "write_cir",
    "read_cir",
]


class DegenerateChannelError(ValueError):
    """Row and column of a subcarrier carry no energy in either channel."""


@dataclass(frozen=True)
class OfdmParams:
    carrier_freq_hz: float = 22_400.0
    symbol_duration_s: float = 0.08192
    cp_duration_s: float = 0.0205
    sample_rate_hz: float = 50_000.0
    fft_size: int = 4096
    num_subcarriers: int = 336
    bits_per_symbol: int = 1

    def __post_init__(self):
        for name in ("carrier_freq_hz", "symbol_duration_s", "cp_duration_s", "sample_rate_hz"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive, got {getattr(self, name)!r}")
        if self.fft_size < 1 or self.num_subcarriers < 1:
            raise ValueError("fft_size and num_subcarriers must be >= 1")
        if self.num_subcarriers > self.fft_size:
            raise ValueError(
                f"num_subcarriers ({self.num_subcarriers}) exceeds fft_size ({self.fft_size})"
            )
        if self.bits_per_symbol < 1:
            raise ValueError("bits_per_symbol must be >= 1")
        spacing = self.sample_rate_hz / self.fft_size
        if abs(spacing * self.symbol_duration_s - 1.0) >= 1e-9:
            raise ValueError(
                f"subcarrier spacing f_s/N_F = {spacing} Hz disagrees with 1/T = "
                f"{1.0 / self.symbol_duration_s} Hz"
            )

    @property
    def subcarrier_spacing_hz(self) -> float:
        return 1.0 / self.symbol_duration_s

    @property
    def subcarrier_freqs(self) -> np.ndarray:
        """f_m = f_c + (m - N/2)/T for m = 0..N-1."""
        m = np.arange(self.num_subcarriers)
        return self.carrier_freq_hz + (m - self.num_subcarriers / 2) / self.symbol_duration_s

    @property
    def active_bins(self) -> np.ndarray:
        """Baseband DFT bin carrying each subcarrier, (m - N/2) mod N_F."""
        m = np.arange(self.num_subcarriers)
        return (m - self.num_subcarriers // 2) % self.fft_size


@dataclass(frozen=True)
class ChannelStatParams:
    num_paths: int = 10
    mean_interarrival_s: float = 1e-3
    power_decay_db_over_cp: float = 20.0
    velocity_deviation_mps: float = 0.1
    sound_speed_mps: float = 1500.0

    def __post_init__(self):
        if self.num_paths < 1:
            raise ValueError(f"num_paths must be >= 1, got {self.num_paths}")
        if not self.mean_interarrival_s > 0:
            raise ValueError(f"mean_interarrival_s must be > 0, got {self.mean_interarrival_s}")
        if not self.sound_speed_mps > 0:
            raise ValueError(f"sound_speed_mps must be > 0, got {self.sound_speed_mps}")
        if self.velocity_deviation_mps < 0:
            raise ValueError("velocity_deviation_mps must be >= 0")


@dataclass(frozen=True)
class PathSet:
    amplitudes: np.ndarray
    delays_s: np.ndarray
    doppler_factors: np.ndarray

    def __post_init__(self):
        n = len(self.amplitudes)
        if len(self.delays_s) != n or len(self.doppler_factors) != n:
            raise ValueError("amplitudes, delays_s and doppler_factors must have equal length")
        if np.any(np.asarray(self.delays_s) < 0):
            raise ValueError("path delays must be nonnegative")

    @property
    def num_paths(self) -> int:
        return len(self.amplitudes)

    @property
    def total_power(self) -> float:
        return float(np.sum(np.abs(self.amplitudes) ** 2))


@dataclass(frozen=True)
class ChannelMatrix:
    entries: np.ndarray
    depth_profile: np.ndarray | None = None
    band_mask_applied: bool = False

    def __post_init__(self):
        e = np.asarray(self.entries)
        if e.ndim != 2 or e.shape[0] != e.shape[1]:
            raise ValueError(f"channel matrix must be square, got shape {e.shape}")
        if not np.all(np.isfinite(e)):
            raise ValueError("channel matrix has non-finite entries")

    @property
    def size(self) -> int:
        return self.entries.shape[0]

    @property
    def diagonal(self) -> np.ndarray:
        return np.diagonal(self.entries).copy()


@dataclass(frozen=True)
class MeasuredCir:
    """Baseband CIR h(n; l), shape (N_F, L_M): discrete time n by delay tap l."""

    samples: np.ndarray
    time_sample_rate_hz: float = 0.0
    delay_sample_rate_hz: float = 0.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        s = np.asarray(self.samples)
        if s.ndim != 2:
            raise ValueError("CIR samples must be a 2-D array (time, delay)")
        if s.shape[1] > s.shape[0]:
            raise ValueError(
                f"memory length L_M = {s.shape[1]} exceeds N_F = {s.shape[0]}"
            )
        if not np.all(np.isfinite(s)):
            raise ValueError("CIR has non-finite samples")

    @property
    def fft_size(self) -> int:
        return self.samples.shape[0]

    @property
    def memory_length(self) -> int:
        return self.samples.shape[1]


def _entries(h) -> np.ndarray:
    return np.asarray(h.entries if isinstance(h, ChannelMatrix) else h)


# ---------------------------------------------------------------------------
# channel realizations


def draw_paths(
    rng: np.random.Generator,
    stats: ChannelStatParams,
    cp_duration_s: float,
    normalize: bool = True,
) -> PathSet:
    """Draw one MSML realization.

    The first arrival sits at delay 0 and later arrivals follow exponential
    inter-arrival gaps.  Mean path power decays so that it is
    ``power_decay_db_over_cp`` lower at ``cp_duration_s`` than at delay 0;
    gains are circular complex Gaussian (Rayleigh magnitude).  Path
    velocities are uniform on +-sigma_u and a_p = v_p / c.
    """
    if stats.num_paths < 1 or not stats.mean_interarrival_s > 0:
        raise ValueError("num_paths must be >= 1 and mean_interarrival_s > 0")
    P = stats.num_paths
    gaps = rng.exponential(stats.mean_interarrival_s, size=P - 1)
    delays = np.concatenate(([0.0], np.cumsum(gaps)))
    decay = stats.power_decay_db_over_cp * math.log(10.0) / 10.0 / cp_duration_s
    mean_power = np.exp(-decay * delays)
    gains = np.sqrt(mean_power / 2) * (rng.standard_normal(P) + 1j * rng.standard_normal(P))
    if normalize:
        gains = gains / np.sqrt(np.sum(np.abs(gains) ** 2))
    sigma = stats.velocity_deviation_mps
    if sigma == 0:
        doppler = np.zeros(P)
    else:
        doppler = rng.uniform(-sigma, sigma, size=P) / stats.sound_speed_mps
    return PathSet(gains, delays, doppler)


def ici_coefficient(a, f_m, f_n, T):
    """Coupling from transmitted subcarrier f_m into received subcarrier f_n.

    sinc(x) * exp(j*pi*x) with x = (a*f_m - (f_n - f_m)) * T and the
    normalized sinc.  Broadcasts over array arguments.
    """
    x = (np.asarray(a) * f_m - (np.asarray(f_n) - f_m)) * T
    return np.sinc(x) * np.exp(1j * np.pi * x)


_NEAR = 1e-3


def build_channel_matrix(paths: PathSet, ofdm: OfdmParams) -> ChannelMatrix:
    """H[n, m] = sum_p A_p * rho_p(m -> n) * exp(-j 2 pi f_m tau_p).

    With c = a f_m T and the integer offset k = n - m, the ICI kernel
    sinc(c - k) exp(j pi (c - k)) reduces to exp(j pi c) sin(pi c) / (pi (c - k)),
    so only the per-column factor needs trigonometric evaluation.  Entries
    with |c - k| below ``_NEAR`` fall back to the direct kernel.
    """
    f = ofdm.subcarrier_freqs
    T = ofdm.symbol_duration_s
    N = ofdm.num_subcarriers
    n_idx = np.arange(N)
    # f_n - f_m = (n - m)/T exactly; avoids cancellation in large carrier values
    offset = (n_idx[:, None] - n_idx[None, :]).astype(float)
    H = np.zeros((N, N), dtype=complex)
    for A, tau, a in zip(paths.amplitudes, paths.delays_s, paths.doppler_factors):
        c = a * f * T
        col = A * np.exp(-2j * np.pi * f * tau)
        d = c[None, :] - offset
        near = np.abs(d) < _NEAR
        num = col * np.exp(1j * np.pi * c) * np.sin(np.pi * c) / np.pi
        H += num[None, :] / np.where(near, 1.0, d)
        if near.any():
            r, k = np.nonzero(near)
            x = d[r, k]
            H[r, k] += col[k] * np.sinc(x) * np.exp(1j * np.pi * x) - num[k]
    return ChannelMatrix(H)


# ---------------------------------------------------------------------------
# ICI depth


def _band_energies(E: np.ndarray, max_depth: int) -> tuple[np.ndarray, np.ndarray]:
    """Row and column energies within |offset| <= D for D = 0..max_depth.

    Returns two arrays of shape (max_depth + 1, N): entry [D, m] is the
    energy of row m (resp. column m) restricted to the band of half-width D.
    """
    N = E.shape[0]
    rows = np.zeros((max_depth + 1, N))
    cols = np.zeros((max_depth + 1, N))
    d = np.diagonal(E)
    rows[0] = d
    cols[0] = d
    for k in range(1, max_depth + 1):
        inc_r = np.zeros(N)
        inc_c = np.zeros(N)
        if k < N:
            upper = np.diagonal(E, k)  # E[m, m+k]
            lower = np.diagonal(E, -k)  # E[m+k, m]
            inc_r[: N - k] += upper
            inc_r[k:] += lower
            inc_c[: N - k] += lower
            inc_c[k:] += upper
        rows[k] = rows[k - 1] + inc_r
        cols[k] = cols[k - 1] + inc_c
    return rows, cols


def energy_ratio(H, max_depth: int | None = None, subtract_overlap: bool = False) -> np.ndarray:
    """Lateral-plus-vertical energy ratio around each diagonal element.

    Returns an array ``r`` of shape (max_depth + 1, N) where ``r[D, m]`` is the
    fraction of the energy of row m plus column m lying within |offset| <= D.
    With ``subtract_overlap`` the shared diagonal term is counted once in
    numerator and denominator instead of twice.  Zero denominators give 1.
    """
    E = np.abs(_entries(H)) ** 2
    N = E.shape[0]
    if max_depth is None:
        max_depth = N - 1
    max_depth = min(max_depth, N - 1)
    rows, cols = _band_energies(E, max_depth)
    num = rows + cols
    den = E.sum(axis=1) + E.sum(axis=0)
    if subtract_overlap:
        d = np.diagonal(E)
        num = num - d
        den = den - d
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = np.where(den > 0, num / np.where(den > 0, den, 1.0), 1.0)
    if max_depth == N - 1:
        ratio[-1] = 1.0
    return np.minimum(ratio, 1.0)


def optimal_depths(H, eta: float, subtract_overlap: bool = False) -> np.ndarray:
    """Smallest depth per subcarrier whose energy ratio reaches ``eta``."""
    if not 0 < eta <= 1:
        raise ValueError(f"eta must lie in (0, 1], got {eta}")
    ratio = energy_ratio(H, subtract_overlap=subtract_overlap)
    # tolerance absorbs summation-order rounding at eta = 1
    meets = ratio >= eta - 1e-12
    return np.argmax(meets, axis=0)


def select_depth(H_A, H_B, m: int, eta: float, subtract_overlap: bool = False) -> int:
    """ICI depth for subcarrier ``m``: the larger of the two per-link optima."""
    return int(_depths_checked(H_A, H_B, eta, subtract_overlap, index=m))


def depth_profile(H_A, H_B, eta: float, subtract_overlap: bool = False) -> np.ndarray:
    """Per-subcarrier ICI depth for the whole symbol."""
    return _depths_checked(H_A, H_B, eta, subtract_overlap)


def _depths_checked(H_A, H_B, eta, subtract_overlap, index=None):
    a, b = _entries(H_A), _entries(H_B)
    if a.shape != b.shape:
        raise ValueError("H_A and H_B must have the same shape")
    dead = ~(np.any(a != 0, axis=0) | np.any(a != 0, axis=1) | np.any(b != 0, axis=0) | np.any(b != 0, axis=1))
    if index is not None and dead[index]:
        raise DegenerateChannelError(f"subcarrier {index} has zero row and column in both channels")
    d = np.maximum(optimal_depths(a, eta, subtract_overlap), optimal_depths(b, eta, subtract_overlap))
    return d if index is None else d[index]


def band_truncate(H, depth_profile) -> ChannelMatrix:
    """Zero H[n, m] wherever |n - m| exceeds the depth of transmit subcarrier m."""
    e = _entries(H)
    N = e.shape[0]
    depths = np.asarray(depth_profile, dtype=int)
    if depths.shape != (N,) or np.any(depths < 0) or np.any(depths > N - 1):
        raise ValueError(f"depth_profile must have length {N} with entries in [0, {N - 1}]")
    idx = np.arange(N)
    mask = np.abs(idx[:, None] - idx[None, :]) <= depths[None, :]
    return ChannelMatrix(np.where(mask, e, 0), depth_profile=depths.copy(), band_mask_applied=True)


def perturb_channel(H, cer_db, rng: np.random.Generator) -> ChannelMatrix:
    """Add i.i.d. CN estimation error at the requested channel error ratio.

    ``cer_db`` of ``None`` or +inf means perfect channel knowledge.
    """
    e = _entries(H)
    if cer_db is None or cer_db == math.inf:
        return H if isinstance(H, ChannelMatrix) else ChannelMatrix(e)
    err_power = np.mean(np.abs(e) ** 2) * 10.0 ** (-cer_db / 10.0)
    theta = math.sqrt(err_power / 2) * (
        rng.standard_normal(e.shape) + 1j * rng.standard_normal(e.shape)
    )
    return ChannelMatrix(e + theta)


# ---------------------------------------------------------------------------
# measured CIRs


def cir_to_frequency(cir: MeasuredCir, ofdm: OfdmParams | None = None, bins=None) -> ChannelMatrix:
    """DFT a time-varying baseband CIR into a frequency-domain coupling matrix.

    H[i, k] = 1/N_F sum_l sum_n h(n; l) exp(j 2pi/N_F (-i n + k (n - l))),
    restricted to the rows and columns in ``bins`` (default: the active bins
    of ``ofdm``, or all N_F bins when neither is given).
    """
    h = np.asarray(cir.samples, dtype=complex)
    NF, LM = h.shape
    if LM > NF:
        raise ValueError(f"memory length {LM} exceeds N_F = {NF}")
    if bins is None:
        if ofdm is None:
            bins = np.arange(NF)
        else:
            if ofdm.fft_size != NF:
                raise ValueError(f"CIR has N_F = {NF} but OFDM params use {ofdm.fft_size}")
            bins = ofdm.active_bins
    bins = np.asarray(bins)
    # G[n, k] = sum_l h(n; l) exp(-j 2pi k l / N_F)
    G = np.fft.fft(h, n=NF, axis=1)[:, bins]
    n = np.arange(NF)
    W = np.exp(2j * np.pi * np.outer(n, bins) / NF)
    F = np.fft.fft(G * W, axis=0) / NF  # F[i, k] over all i
    return ChannelMatrix(F[bins, :])


_CIR_MAGIC = b"PNCCIR1\n"


def write_cir(path, cir: MeasuredCir) -> None:
    """Write a CIR: magic line, one JSON header line, then float64 re/im pairs.

    Samples are stored row-major over (n, l), little endian, real part first.
    """
    header = {
        "fft_size": cir.fft_size,
        "memory_length": cir.memory_length,
        "time_sample_rate_hz": float(cir.time_sample_rate_hz),
        "delay_sample_rate_hz": float(cir.delay_sample_rate_hz),
        "dtype": "<f8",
        "layout": "row-major (n, l), interleaved real/imag",
        "meta": cir.meta,
    }
    body = np.ascontiguousarray(np.asarray(cir.samples, dtype="<c16")).view("<f8")
    with open(path, "wb") as fh:
        fh.write(_CIR_MAGIC)
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        fh.write(body.tobytes())


def read_cir(path) -> MeasuredCir:
    raw = Path(path).read_bytes()
    if not raw.startswith(_CIR_MAGIC):
        raise ValueError(f"{path}: not a CIR file (bad magic)")
    rest = raw[len(_CIR_MAGIC):]
    nl = rest.index(b"\n")
    header = json.loads(rest[:nl])
    body = np.frombuffer(rest[nl + 1:], dtype="<f8")
    NF, LM = header["fft_size"], header["memory_length"]
    if body.size != 2 * NF * LM:
        raise ValueError(f"{path}: expected {2 * NF * LM} floats, found {body.size}")
    samples = body.view("<c16").reshape(NF, LM).astype(complex)
    return MeasuredCir(
        samples,
        header["time_sample_rate_hz"],
        header["delay_sample_rate_hz"],
        header.get("meta", {}),
    )

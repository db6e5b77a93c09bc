"""Soft-input soft-output detection of the superimposed OFDM symbol.

Two detectors share one interface: given the received vector, both channel
matrices and a prior over the joint symbol (x_A[m], x_B[m]) at every
subcarrier, return a per-subcarrier distribution over the 4**Q joint
symbols.

* :class:`AcaFgdDetector` runs sum-product message passing on a factor graph
  whose factor ``y[m]`` couples the variables within ``D^m`` subcarriers of
  ``m``; the depths come from the channel energy distribution.
* :func:`sm_lmmse_detect` is the low-complexity linear alternative built on
  the superimposed statistic x_A + x_B.

Noise convention: ``noise_variance`` is the total variance of the circular
complex noise sample, w ~ CN(0, sigma^2).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .channel import ChannelMatrix, depth_profile as _depth_profile
from .codec import BPSK, Constellation

__all__ = [
    "ReceivedFrame",
    "InvalidPriorError",
    "factor_likelihood",
    "AcaFgdDetector",
    "aca_fgd_detect",
    "LmmseWorkspace",
    "sm_lmmse_workspace",
    "sm_lmmse_detect",
    "uniform_prior",
]

MIN_NOISE_VAR = 1e-12
MSG_FLOOR = 1e-30
# cap on elements of one batched factor tensor
_CHUNK_ELEMS = 1 << 21


class InvalidPriorError(ValueError):
    pass


@dataclass(frozen=True)
class ReceivedFrame:
    y: np.ndarray
    noise_variance: float

    def __post_init__(self):
        if not np.all(np.isfinite(self.y)):
            raise ValueError("received vector has non-finite entries")
        if not self.noise_variance >= 0:
            raise ValueError("noise variance must be nonnegative")

    @property
    def sigma2(self) -> float:
        return max(float(self.noise_variance), MIN_NOISE_VAR)


def uniform_prior(num_subcarriers: int, constellation: Constellation = BPSK) -> np.ndarray:
    J = constellation.joint_size
    return np.full((num_subcarriers, J), 1.0 / J)


def _entries(h) -> np.ndarray:
    return np.asarray(h.entries if isinstance(h, ChannelMatrix) else h)


def _check_prior(prior, N, J) -> np.ndarray:
    p = np.asarray(prior, dtype=float)
    if p.shape != (N, J):
        raise InvalidPriorError(f"prior must have shape ({N}, {J}), got {p.shape}")
    if not np.all(np.isfinite(p)) or np.any(p < 0):
        raise InvalidPriorError("prior must be finite and nonnegative")
    s = p.sum(axis=1, keepdims=True)
    if np.any(s <= 0):
        raise InvalidPriorError("prior has an all-zero row")
    return p / s


def _normalize_rows(p: np.ndarray) -> np.ndarray:
    p = np.maximum(p, MSG_FLOOR)
    return p / p.sum(axis=-1, keepdims=True)


def factor_likelihood(y, H_A, H_B, m: int, depth: int, x_a, x_b, noise_variance: float) -> float:
    """Gaussian likelihood of ``y[m]`` given the symbols in its neighbourhood.

    ``x_a`` and ``x_b`` hold the symbols on subcarriers
    ``max(0, m - depth) .. min(N - 1, m + depth)``.
    """
    a, b = _entries(H_A), _entries(H_B)
    N = a.shape[0]
    lo, hi = max(0, m - depth), min(N - 1, m + depth)
    xa = np.asarray(x_a)
    xb = np.asarray(x_b)
    if xa.shape != (hi - lo + 1,) or xb.shape != xa.shape:
        raise ValueError(f"neighbourhood of subcarrier {m} has {hi - lo + 1} symbols")
    r = y[m] - a[m, lo:hi + 1] @ xa - b[m, lo:hi + 1] @ xb
    return float(np.exp(-abs(r) ** 2 / max(noise_variance, MIN_NOISE_VAR)))


class _FactorGroup:
    """Factors sharing one neighbourhood width, with cached likelihood tensors."""

    def __init__(self, factors, lo, width, lik):
        self.factors = factors  # (G,)
        self.lo = lo  # (G,)
        self.width = width
        self.lik = lik  # (G, J, ..., J) with `width` symbol axes


class AcaFgdDetector:
    """Adaptive channel-aware factor-graph detector for one received symbol.

    The depth profile and the factor likelihoods depend only on the frame,
    so they are computed once at construction; :meth:`detect` can then be
    called once per outer iteration with a new prior.

    Factor ``y[m]`` is connected to variables ``x[k]`` with ``|k - m| <=
    D^m`` (clipped to the band edges); a variable's neighbours are the
    factors whose neighbourhood contains it.  Depths are capped at
    ``max_depth``.
    """

    def __init__(
        self,
        frame: ReceivedFrame,
        H_A,
        H_B,
        eta: float = 0.9,
        depths=None,
        sweeps: int = 1,
        max_depth: int | None = 3,
        persist_messages: bool = False,
        constellation: Constellation = BPSK,
        subtract_overlap: bool = False,
    ):
        a, b = _entries(H_A), _entries(H_B)
        if a.shape != b.shape or a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError("H_A and H_B must be square matrices of equal size")
        y = np.asarray(frame.y)
        N = a.shape[0]
        if y.shape != (N,):
            raise ValueError(f"received vector must have length {N}")
        if sweeps < 1:
            raise ValueError("sweeps must be >= 1")
        if depths is None:
            if not 0 < eta <= 1:
                raise ValueError(f"eta must lie in (0, 1], got {eta}")
            depths = _depth_profile(a, b, eta, subtract_overlap)
        depths = np.asarray(depths, dtype=int)
        if depths.shape != (N,) or np.any(depths < 0):
            raise ValueError(f"depths must be {N} nonnegative integers")
        if max_depth is not None:
            depths = np.minimum(depths, max_depth)
        self.N = N
        self.depths = depths
        self.sweeps = sweeps
        self.persist_messages = persist_messages
        self.constellation = constellation
        self.J = constellation.joint_size
        m = np.arange(N)
        self.lo = np.maximum(0, m - depths)
        self.hi = np.minimum(N - 1, m + depths)
        # silent factors: zero row in both channels carry no information
        self.dead = ~(np.any(a != 0, axis=1) | np.any(b != 0, axis=1))
        self._build_groups(y, a, b, frame.sigma2)
        self._build_edges()
        self._f2v = None

    # -- construction -----------------------------------------------------

    def _build_groups(self, y, a, b, sigma2):
        J = self.J
        sa = self.constellation.joint_a
        sb = self.constellation.joint_b
        width = self.hi - self.lo + 1
        self.groups = []
        for w in np.unique(width):
            fac = np.nonzero(width == w)[0]
            per = max(1, _CHUNK_ELEMS // (J**w))
            for start in range(0, len(fac), per):
                f = fac[start:start + per]
                lo = self.lo[f]
                cols = lo[:, None] + np.arange(w)[None, :]
                ha = a[f[:, None], cols]  # (G, w)
                hb = b[f[:, None], cols]
                contrib = ha[:, :, None] * sa[None, None, :] + hb[:, :, None] * sb[None, None, :]
                r = np.broadcast_to(y[f].reshape((-1,) + (1,) * w), (len(f),) + (J,) * w).copy()
                for j in range(w):
                    shape = [len(f)] + [1] * w
                    shape[1 + j] = J
                    r -= contrib[:, j].reshape(shape)
                ll = -(r.real ** 2 + r.imag ** 2) / sigma2
                ll -= ll.reshape(len(f), -1).max(axis=1).reshape((-1,) + (1,) * w)
                lik = np.exp(ll)
                lik[self.dead[f]] = 1.0
                self.groups.append(_FactorGroup(f, lo, int(w), lik))

    def _build_edges(self):
        # edge list: (factor, slot) -> variable lo + slot, laid out per group
        self.edge_offset = []
        var_of_edge = []
        off = 0
        for g in self.groups:
            n = len(g.factors) * g.width
            self.edge_offset.append(off)
            var_of_edge.append((g.lo[:, None] + np.arange(g.width)[None, :]).ravel())
            off += n
        self.num_edges = off
        self.edge_var = np.concatenate(var_of_edge)

    # -- message passing --------------------------------------------------

    def reset(self):
        self._f2v = None

    def detect(self, prior) -> np.ndarray:
        """One detection pass; returns the normalized per-subcarrier posterior."""
        p = _check_prior(prior, self.N, self.J)
        log_prior = np.log(np.maximum(p, MSG_FLOOR))
        if self._f2v is None or not self.persist_messages:
            f2v = np.full((self.num_edges, self.J), 1.0 / self.J)
        else:
            f2v = self._f2v
        for _ in range(self.sweeps):
            log_f2v = np.log(f2v)
            total = log_prior.copy()
            np.add.at(total, self.edge_var, log_f2v)
            v2f = total[self.edge_var] - log_f2v
            v2f -= v2f.max(axis=1, keepdims=True)
            v2f = _normalize_rows(np.exp(v2f))
            f2v = self._factor_update(v2f)
        log_f2v = np.log(f2v)
        total = log_prior.copy()
        np.add.at(total, self.edge_var, log_f2v)
        total -= total.max(axis=1, keepdims=True)
        post = _normalize_rows(np.exp(total))
        self._f2v = f2v
        return post

    def _factor_update(self, v2f: np.ndarray) -> np.ndarray:
        out = np.empty_like(v2f)
        J = self.J
        for g, off in zip(self.groups, self.edge_offset):
            G, w = len(g.factors), g.width
            q = v2f[off:off + G * w].reshape(G, w, J)
            prod = g.lik.copy()
            for j in range(w):
                shape = [G] + [1] * w
                shape[1 + j] = J
                prod *= q[:, j].reshape(shape)
            msgs = np.empty((G, w, J))
            axes = tuple(range(1, w + 1))
            for j in range(w):
                marg = prod.sum(axis=tuple(a for a in axes if a != 1 + j))
                msgs[:, j] = marg / q[:, j]
            out[off:off + G * w] = _normalize_rows(msgs.reshape(G * w, J))
        return out


def aca_fgd_detect(frame: ReceivedFrame, H_A, H_B, prior, eta: float = 0.9, sweeps: int = 1, **kwargs) -> np.ndarray:
    """Stateless convenience wrapper around :class:`AcaFgdDetector`."""
    return AcaFgdDetector(frame, H_A, H_B, eta=eta, sweeps=sweeps, **kwargs).detect(prior)


# ---------------------------------------------------------------------------
# SM-LMMSE


@dataclass
class LmmseWorkspace:
    mean_a: np.ndarray
    mean_b: np.ndarray
    var_a: np.ndarray
    var_b: np.ndarray
    diag_a: np.ndarray
    diag_b: np.ndarray
    coeff: np.ndarray  # C, (N, N)
    estimate: np.ndarray  # x_hat, (N,)
    cond_mean: np.ndarray  # mu_x, (N, J)
    cond_var: np.ndarray  # sigma_x^2, (N,)


def _user_moments(p_joint, constellation):
    M = constellation.size
    t = p_joint.reshape(-1, M, M)
    pa, pb = t.sum(axis=2), t.sum(axis=1)
    pts = constellation.points
    mean_a, mean_b = pa @ pts, pb @ pts
    var_a = np.sum(np.abs(pts[None, :] - mean_a[:, None]) ** 2 * pa, axis=1)
    var_b = np.sum(np.abs(pts[None, :] - mean_b[:, None]) ** 2 * pb, axis=1)
    return mean_a, mean_b, var_a, var_b


def sm_lmmse_workspace(frame: ReceivedFrame, H_A, H_B, prior, constellation: Constellation = BPSK) -> LmmseWorkspace:
    a, b = _entries(H_A), _entries(H_B)
    N = a.shape[0]
    p = _check_prior(prior, N, constellation.joint_size)
    y = np.asarray(frame.y)
    sigma2 = frame.sigma2
    mean_a, mean_b, var_a, var_b = _user_moments(p, constellation)
    sa, sb = np.diagonal(a).copy(), np.diagonal(b).copy()

    # H V H^H per user, V diagonal
    cov_a = (a * var_a[None, :]) @ a.conj().T
    cov_b = (b * var_b[None, :]) @ b.conj().T
    own = np.abs(sa) ** 2 * var_a + np.abs(sb) ** 2 * var_b
    R = cov_a + cov_b + np.diag(np.abs(sa) ** 2 * (1 - var_a) + np.abs(sb) ** 2 * (1 - var_b) + sigma2)
    try:
        Rinv = scipy.linalg.cho_solve(scipy.linalg.cho_factor(R, lower=True), np.eye(N))
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError("regularized LMMSE system is singular") from exc
    C = np.conj(sa + sb)[:, None] * Rinv

    resid = y - (a @ mean_a - sa * mean_a) - (b @ mean_b - sb * mean_b)
    x_hat = C @ resid

    # conditional moments of x_hat[m] given (x_A[m], x_B[m]) under the diagonal model
    sx = sa * mean_a + sb * mean_b
    c_diag = np.diagonal(C)
    offset = C @ sx - c_diag * sx
    la, lb = constellation.joint_a, constellation.joint_b
    mu = offset[:, None] + c_diag[:, None] * (sa[:, None] * la[None, :] + sb[:, None] * lb[None, :])
    Rc = cov_a + cov_b - np.diag(own) + sigma2 * np.eye(N)
    var = np.real(np.sum((C @ Rc) * np.conj(C), axis=1))
    var = np.maximum(var, MIN_NOISE_VAR)
    return LmmseWorkspace(mean_a, mean_b, var_a, var_b, sa, sb, C, x_hat, mu, var)


def sm_lmmse_detect(frame: ReceivedFrame, H_A, H_B, prior, constellation: Constellation = BPSK) -> np.ndarray:
    """Per-subcarrier joint-symbol probabilities from the superimposed LMMSE estimate."""
    ws = sm_lmmse_workspace(frame, H_A, H_B, prior, constellation)
    ll = -np.abs(ws.cond_mean - ws.estimate[:, None]) ** 2 / ws.cond_var[:, None]
    ll -= ll.max(axis=1, keepdims=True)
    return _normalize_rows(np.exp(ll))


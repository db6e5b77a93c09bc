"""LDPC coding for the two-user superposition at a PNC relay.

Both end nodes use the same binary code.  The relay decodes the pair
(c_A, c_B) jointly on the Tanner graph with 4-state messages and keeps
only c_R = c_A xor c_B.

Joint bit states are indexed 2*c_A + c_B, i.e. (0,0), (0,1), (1,0), (1,1).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

__all__ = [
    "LdpcCode",
    "ConstructionError",
    "build_qc_ldpc",
    "encode",
    "compute_syndrome",
    "gf2_rank",
    "Interleaver",
    "DEFAULT_INTERLEAVER_SEED",
    "Constellation",
    "BPSK",
    "map_symbols",
    "bit_pairs_to_symbols",
    "symbols_to_bit_pairs",
    "pnc_map",
    "GspaResult",
    "joint_gspa_decode",
    "write_alist",
    "read_alist",
]

PROB_FLOOR = 1e-30
DEFAULT_INTERLEAVER_SEED = 7

# Walsh-Hadamard transform over Z2 x Z2; diagonalizes XOR-convolution of 4-state messages
_WHT4 = np.array([[1, 1, 1, 1], [1, -1, 1, -1], [1, 1, -1, -1], [1, -1, -1, 1]], dtype=float)


class ConstructionError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# GF(2)


def _rref(M: np.ndarray, col_order=None):
    """Reduced row echelon form over GF(2); returns (R, pivot_columns)."""
    R = (np.asarray(M) % 2).astype(np.uint8).copy()
    rows, cols = R.shape
    order = range(cols) if col_order is None else col_order
    pivots = []
    r = 0
    for c in order:
        if r == rows:
            break
        hit = np.nonzero(R[r:, c])[0]
        if hit.size == 0:
            continue
        p = r + hit[0]
        if p != r:
            R[[r, p]] = R[[p, r]]
        others = np.nonzero(R[:, c])[0]
        others = others[others != r]
        R[others] ^= R[r]
        pivots.append(c)
        r += 1
    return R[:r], np.array(pivots, dtype=int)


def gf2_rank(M) -> int:
    return len(_rref(M)[1])


# ---------------------------------------------------------------------------
# code


@dataclass(frozen=True, eq=False)
class LdpcCode:
    """Binary LDPC code with a systematic encoder.

    ``info_positions`` lists the codeword coordinates carrying the message;
    the remaining coordinates are parity, ``codeword[parity_positions] =
    parity_map @ info mod 2``.
    """

    H: np.ndarray
    info_positions: np.ndarray
    parity_positions: np.ndarray
    parity_map: np.ndarray
    seed: int | None = None

    @classmethod
    def from_parity_check(cls, H, seed=None) -> "LdpcCode":
        H = (np.asarray(H) % 2).astype(np.uint8)
        M, L = H.shape
        # prefer pivots at the tail so that information bits lead the codeword
        R, piv = _rref(H, col_order=list(range(L - 1, -1, -1)))
        piv_set = set(piv.tolist())
        info = np.array([c for c in range(L) if c not in piv_set], dtype=int)
        # row r of R: c[piv[r]] = sum over info columns R[r, info] c[info]
        return cls(H, info, piv, R[:, info].astype(np.uint8), seed)

    @property
    def block_length(self) -> int:
        return self.H.shape[1]

    @property
    def info_length(self) -> int:
        return len(self.info_positions)

    @property
    def num_checks(self) -> int:
        return self.H.shape[0]

    @property
    def rate(self) -> float:
        return self.info_length / self.block_length

    @property
    def generator(self) -> np.ndarray:
        """K x L generator, identity on the information positions."""
        G = np.zeros((self.info_length, self.block_length), dtype=np.uint8)
        G[np.arange(self.info_length), self.info_positions] = 1
        G[:, self.parity_positions] = self.parity_map.T
        return G

    @property
    def column_weights(self) -> np.ndarray:
        return self.H.sum(axis=0)

    @property
    def row_weights(self) -> np.ndarray:
        return self.H.sum(axis=1)

    @cached_property
    def tanner_graph(self) -> "_TannerGraph":
        return _TannerGraph(self.H)

    def has_four_cycles(self) -> bool:
        overlap = self.H.astype(np.int32) @ self.H.T.astype(np.int32)
        np.fill_diagonal(overlap, 0)
        return bool(np.any(overlap > 1))


def encode(code: LdpcCode, info_bits) -> np.ndarray:
    m = np.asarray(info_bits, dtype=np.uint8)
    if m.shape != (code.info_length,):
        raise ValueError(f"expected {code.info_length} information bits, got shape {m.shape}")
    c = np.zeros(code.block_length, dtype=np.uint8)
    c[code.info_positions] = m
    c[code.parity_positions] = (code.parity_map.astype(np.int64) @ m) % 2
    return c


def compute_syndrome(code: LdpcCode, c_R) -> np.ndarray:
    c = np.asarray(c_R, dtype=np.int64)
    if c.shape[-1] != code.block_length:
        raise ValueError(f"expected length {code.block_length}, got {c.shape[-1]}")
    return ((code.H.astype(np.int64) @ c.T) % 2).T.astype(np.uint8)


def _base_matrix(mb: int, nb: int, rng: np.random.Generator) -> np.ndarray:
    """Irregular protograph: weight-3 information columns, dual-diagonal parity."""
    kb = nb - mb
    B = np.zeros((mb, nb), dtype=bool)
    # information block-columns: weight 3, rows spread as evenly as possible
    load = np.zeros(mb)
    for j in range(kb):
        w = min(3, mb)
        rows = np.lexsort((rng.random(mb), load))[:w]
        B[rows, j] = True
        load[rows] += 1
    # parity part: one weight-3 column then a dual diagonal
    B[[0, mb // 2, mb - 1], kb] = True
    for j in range(1, mb):
        B[[j - 1, j], kb + j] = True
    return B


def _creates_four_cycle(S, B, i, j, s, Z) -> bool:
    mb, nb = B.shape
    for k in range(mb):
        if k == i or not B[k, j] or S[k, j] < 0:
            continue
        for l in range(nb):
            if l == j or not (B[i, l] and B[k, l]) or S[i, l] < 0 or S[k, l] < 0:
                continue
            if (s - S[i, l] + S[k, l] - S[k, j]) % Z == 0:
                return True
    return False


def _lift(B: np.ndarray, S: np.ndarray, Z: int) -> np.ndarray:
    mb, nb = B.shape
    H = np.zeros((mb * Z, nb * Z), dtype=np.uint8)
    r = np.arange(Z)
    for i in range(mb):
        for j in range(nb):
            if B[i, j]:
                H[i * Z + r, j * Z + (r + S[i, j]) % Z] = 1
    return H


def _default_lifting(L: int, M: int) -> int:
    for Z in range(L // 12, 0, -1):
        if L % Z == 0 and M % Z == 0 and M // Z >= 3:
            return Z
    raise ConstructionError(f"no circulant size fits L={L}, L-K={M} with at least 3 block rows")


def build_qc_ldpc(
    block_length: int = 336,
    info_length: int = 112,
    construction_seed: int = 1,
    lifting: int | None = None,
    max_attempts: int = 200,
) -> LdpcCode:
    """Irregular quasi-cyclic LDPC code without 4-cycles.

    A small protograph (weight-3 information columns, one weight-3 parity
    column and a weight-2 dual diagonal) is lifted with circulant
    permutations.  Shifts are placed greedily, each one chosen among random
    candidates that close no length-4 cycle with those already placed.
    """
    L, K = block_length, info_length
    if not 0 < K < L:
        raise ValueError(f"need 0 < K < L, got L={L}, K={K}")
    M = L - K
    Z = lifting or _default_lifting(L, M)
    if L % Z or M % Z:
        raise ConstructionError(f"lifting size {Z} must divide both L={L} and L-K={M}")
    mb, nb = M // Z, L // Z
    if mb < 3:
        raise ConstructionError("protograph needs at least 3 block rows")
    rng = np.random.default_rng(construction_seed)
    kb = nb - mb
    for _ in range(max_attempts):
        B = _base_matrix(mb, nb, rng)
        S = -np.ones((mb, nb), dtype=int)
        for j in range(1, mb):  # dual diagonal uses identity blocks
            S[j - 1, kb + j] = 0
            S[j, kb + j] = 0
        x = int(rng.integers(1, Z))
        S[0, kb] = x
        S[mb // 2, kb] = 0
        S[mb - 1, kb] = x
        ok = True
        for j in rng.permutation(kb):
            for i in np.nonzero(B[:, j])[0]:
                for cand in rng.permutation(Z):
                    if not _creates_four_cycle(S, B, i, j, int(cand), Z):
                        S[i, j] = int(cand)
                        break
                else:
                    ok = False
                    break
            if not ok:
                break
        if not ok:
            continue
        code = LdpcCode.from_parity_check(_lift(B, S, Z), seed=construction_seed)
        if code.info_length == K and not code.has_four_cycles():
            return code
    raise ConstructionError(
        f"no 4-cycle-free full-rank lifting found in {max_attempts} attempts (L={L}, K={K})"
    )


# ---------------------------------------------------------------------------
# interleaving and mapping


class Interleaver:
    """Seeded pseudo-random permutation; bit i is carried by position perm[i]."""

    def __init__(self, length: int, seed: int = 0):
        self.length = length
        self.seed = seed
        self.perm = np.random.default_rng(seed).permutation(length)

    def interleave(self, values):
        v = np.asarray(values)
        if v.shape[0] != self.length:
            raise ValueError(f"expected leading length {self.length}, got {v.shape[0]}")
        out = np.empty_like(v)
        out[self.perm] = v
        return out

    def deinterleave(self, values):
        v = np.asarray(values)
        if v.shape[0] != self.length:
            raise ValueError(f"expected leading length {self.length}, got {v.shape[0]}")
        return v[self.perm]


@dataclass(frozen=True, eq=False)
class Constellation:
    """Per-user alphabet indexed by the Q-bit label (MSB first).

    Joint symbols (alpha_i, alpha_k) are indexed ``i * 2**Q + k``.
    """

    points: np.ndarray
    bits_per_symbol: int

    @property
    def size(self) -> int:
        return len(self.points)

    @property
    def joint_size(self) -> int:
        return self.size**2

    @property
    def joint_a(self) -> np.ndarray:
        return np.repeat(self.points, self.size)

    @property
    def joint_b(self) -> np.ndarray:
        return np.tile(self.points, self.size)

    @property
    def superimposed(self) -> np.ndarray:
        return self.joint_a + self.joint_b

    @classmethod
    def qam(cls, bits_per_symbol: int) -> "Constellation":
        if bits_per_symbol == 1:
            return cls(np.array([1.0 + 0j, -1.0 + 0j]), 1)
        if bits_per_symbol == 2:
            # Gray mapped QPSK, label b0 b1 -> ((1-2 b0) + j (1-2 b1)) / sqrt 2
            pts = np.array([1 + 1j, 1 - 1j, -1 + 1j, -1 - 1j]) / np.sqrt(2)
            return cls(pts, 2)
        raise ValueError(f"unsupported bits_per_symbol {bits_per_symbol}")


BPSK = Constellation.qam(1)


def map_symbols(bits, constellation: Constellation = BPSK) -> np.ndarray:
    b = np.asarray(bits, dtype=int)
    Q = constellation.bits_per_symbol
    if b.size % Q:
        raise ValueError(f"bit count {b.size} is not a multiple of Q={Q}")
    labels = b.reshape(-1, Q) @ (1 << np.arange(Q - 1, -1, -1))
    return constellation.points[labels]


def bit_pairs_to_symbols(p_bits, bits_per_symbol: int = 1) -> np.ndarray:
    """Joint bit-pair distributions (L, 4) to joint symbol distributions (L/Q, 4**Q).

    Bits within a symbol are treated as independent; at Q = 1 this is the
    identity relabeling.
    """
    p = np.asarray(p_bits, dtype=float)
    Q = bits_per_symbol
    if Q == 1:
        return p.copy()
    if p.shape[0] % Q:
        raise ValueError("bit count is not a multiple of Q")
    groups = p.reshape(-1, Q, 2, 2)  # [symbol, bit, bA, bB]
    out = np.ones((groups.shape[0],) + (2,) * (2 * Q))
    for q in range(Q):
        shape = [groups.shape[0]] + [1] * (2 * Q)
        shape[1 + q] = 2
        shape[1 + Q + q] = 2
        out = out * groups[:, q].reshape(shape)
    return out.reshape(groups.shape[0], -1)


def symbols_to_bit_pairs(p_sym, bits_per_symbol: int = 1) -> np.ndarray:
    """Marginalize joint symbol distributions back onto per-bit joint states."""
    p = np.asarray(p_sym, dtype=float)
    Q = bits_per_symbol
    if Q == 1:
        return p.copy()
    t = p.reshape((p.shape[0],) + (2,) * (2 * Q))
    out = np.empty((p.shape[0], Q, 4))
    axes = tuple(range(1, 2 * Q + 1))
    for q in range(Q):
        keep = (1 + q, 1 + Q + q)
        m = t.sum(axis=tuple(a for a in axes if a not in keep))
        out[:, q] = m.reshape(p.shape[0], 4)
    return out.reshape(-1, 4)


def pnc_map(p) -> np.ndarray:
    """XOR hard decision: 1 iff the most likely joint state is (0,1) or (1,0)."""
    k = np.argmax(np.asarray(p), axis=-1)
    return ((k == 1) | (k == 2)).astype(np.uint8)


# ---------------------------------------------------------------------------
# joint G-SPA


@dataclass
class GspaResult:
    posterior: np.ndarray
    c_R: np.ndarray
    syndrome: np.ndarray
    converged: bool
    iterations: int


def _normalize(p: np.ndarray) -> np.ndarray:
    p = np.maximum(p, PROB_FLOOR)
    return p / p.sum(axis=-1, keepdims=True)


class _TannerGraph:
    def __init__(self, H: np.ndarray):
        M, L = H.shape
        rows, cols = np.nonzero(H)
        deg = np.bincount(rows, minlength=M)
        self.dc = int(deg.max())
        self.var = -np.ones((M, self.dc), dtype=int)
        slot = np.concatenate([np.arange(d) for d in deg])
        self.var[rows, slot] = cols
        self.mask = self.var >= 0
        self.edge_var = self.var[self.mask]
        self.L = L


def joint_gspa_decode(
    code: LdpcCode,
    prior,
    max_iters: int = 3,
    early_stop: bool = True,
) -> GspaResult:
    """Flooding-schedule sum-product decoding over joint bit-pair states.

    Every check enforces even parity of the A bits and of the B bits among
    its neighbours.  In the Walsh-Hadamard domain that constraint becomes a
    pointwise product, so each check update is a leave-one-out product of
    transformed messages.
    """
    if max_iters < 1:
        raise ValueError("max_iters must be >= 1")
    g = code.tanner_graph
    p0 = _normalize(np.asarray(prior, dtype=float))
    if p0.shape != (code.block_length, 4):
        raise ValueError(f"prior must have shape ({code.block_length}, 4), got {p0.shape}")
    M = code.num_checks
    log_prior = np.log(p0)
    c2v = np.full((M, g.dc, 4), 0.25)
    neutral = np.array([1.0, 0.0, 0.0, 0.0])

    it = 0
    for it in range(1, max_iters + 1):
        # variable -> check
        log_c2v = np.log(c2v[g.mask])
        total = log_prior.copy()
        np.add.at(total, g.edge_var, log_c2v)
        ext = total[g.edge_var] - log_c2v
        ext -= ext.max(axis=1, keepdims=True)
        v2c = np.broadcast_to(neutral, (M, g.dc, 4)).copy()
        v2c[g.mask] = _normalize(np.exp(ext))

        # check -> variable, leave-one-out products in the transform domain
        T = v2c @ _WHT4
        pre = np.ones_like(T)
        suf = np.ones_like(T)
        pre[:, 1:] = np.cumprod(T[:, :-1], axis=1)
        suf[:, :-1] = np.cumprod(T[:, :0:-1], axis=1)[:, ::-1]
        c2v = _normalize((pre * suf) @ _WHT4 / 4.0)

        # a posteriori
        log_c2v = np.log(c2v[g.mask])
        total = log_prior.copy()
        np.add.at(total, g.edge_var, log_c2v)
        total -= total.max(axis=1, keepdims=True)
        post = _normalize(np.exp(total))
        c_R = pnc_map(post)
        s = compute_syndrome(code, c_R)
        if early_stop and not s.any():
            return GspaResult(post, c_R, s, True, it)
    return GspaResult(post, c_R, s, not s.any(), it)


# ---------------------------------------------------------------------------
# alist I/O


def write_alist(path, code: LdpcCode) -> None:
    """MacKay alist with a leading ``# L K seed`` comment line."""
    H = code.H
    M, L = H.shape
    col_idx = [np.nonzero(H[:, j])[0] + 1 for j in range(L)]
    row_idx = [np.nonzero(H[i])[0] + 1 for i in range(M)]
    cw, rw = code.column_weights.astype(int), code.row_weights.astype(int)
    lines = [
        f"# L={L} K={code.info_length} seed={code.seed if code.seed is not None else 'none'}",
        f"{L} {M}",
        f"{cw.max()} {rw.max()}",
        " ".join(map(str, cw)),
        " ".join(map(str, rw)),
    ]
    lines += [" ".join(map(str, np.pad(c, (0, cw.max() - len(c))))) for c in col_idx]
    lines += [" ".join(map(str, np.pad(r, (0, rw.max() - len(r))))) for r in row_idx]
    Path(path).write_text("\n".join(lines) + "\n")


def read_alist(path) -> LdpcCode:
    seed = None
    body = []
    for line in Path(path).read_text().splitlines():
        if line.startswith("#"):
            for tok in line[1:].split():
                k, _, v = tok.partition("=")
                if k == "seed" and v not in ("", "none"):
                    seed = int(v)
            continue
        if line.strip():
            body.append([int(t) for t in line.split()])
    L, M = body[0]
    H = np.zeros((M, L), dtype=np.uint8)
    for j, idx in enumerate(body[4:4 + L]):
        for i in idx:
            if i:
                H[i - 1, j] = 1
    return LdpcCode.from_parity_check(H, seed=seed)

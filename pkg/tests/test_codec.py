import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pncrelay.codec import (
    BPSK,
    Constellation,
    ConstructionError,
    Interleaver,
    LdpcCode,
    bit_pairs_to_symbols,
    build_qc_ldpc,
    compute_syndrome,
    encode,
    gf2_rank,
    joint_gspa_decode,
    map_symbols,
    pnc_map,
    read_alist,
    symbols_to_bit_pairs,
    write_alist,
)

# Tanner graphs that are trees (no cycles of any length)
TREE_CODES = [
    np.array([[1, 1, 1, 0, 0, 0], [0, 0, 1, 1, 1, 0], [0, 0, 0, 0, 1, 1]]),
    np.array([[1, 1, 0, 0, 0, 0, 0, 0], [0, 1, 1, 1, 0, 0, 0, 0], [0, 0, 0, 1, 1, 1, 0, 0],
              [0, 1, 0, 0, 0, 0, 1, 1]]),
    np.array([[1, 1, 1, 1, 0], [0, 0, 0, 1, 1]]),
]


def all_codewords(code):
    return [encode(code, np.array(m)) for m in itertools.product([0, 1], repeat=code.info_length)]


def enumerate_joint_marginals(code, prior):
    """Exact per-position joint-state posteriors by summing over all codeword pairs."""
    words = all_codewords(code)
    L = code.block_length
    out = np.zeros((L, 4))
    idx = np.arange(L)
    for ca in words:
        for cb in words:
            s = 2 * ca + cb
            w = np.prod(prior[idx, s])
            out[idx, s] += w
    return out / out.sum(axis=1, keepdims=True)


def random_prior(rng, L):
    p = rng.dirichlet(np.ones(4), size=L)
    return p


# -- construction ------------------------------------------------------------


def test_default_code_shape(code):
    assert code.block_length == 336 and code.info_length == 112
    assert code.rate == pytest.approx(1 / 3, abs=0)
    assert gf2_rank(code.H) == 336 - 112
    assert not code.has_four_cycles()
    assert set(np.unique(code.column_weights)) == {2, 3}
    assert code.row_weights.min() >= 2


def test_construction_deterministic():
    a = build_qc_ldpc(336, 112, construction_seed=4)
    b = build_qc_ldpc(336, 112, construction_seed=4)
    assert np.array_equal(a.H, b.H)


def test_other_lengths_and_errors():
    c = build_qc_ldpc(240, 80, construction_seed=2)
    assert c.info_length == 80 and not c.has_four_cycles()
    with pytest.raises(ValueError):
        build_qc_ldpc(100, 120)
    with pytest.raises(ConstructionError):
        build_qc_ldpc(336, 112, lifting=5)


def test_generator_consistency(code, rng):
    assert not np.any((code.H.astype(int) @ code.generator.T.astype(int)) % 2)
    for _ in range(100):
        c = encode(code, rng.integers(0, 2, 112))
        assert not compute_syndrome(code, c).any()


def test_encode_systematic_and_zero(code, rng):
    m = rng.integers(0, 2, 112)
    c = encode(code, m)
    assert np.array_equal(c[code.info_positions], m)
    assert not encode(code, np.zeros(112, int)).any()
    with pytest.raises(ValueError):
        encode(code, np.zeros(111, int))


def test_linearity_over_many_pairs(code):
    r = np.random.default_rng(99)
    for _ in range(1000):
        a = encode(code, r.integers(0, 2, 112))
        b = encode(code, r.integers(0, 2, 112))
        assert not compute_syndrome(code, a ^ b).any()


@given(st.integers(0, 2**32 - 1))
def test_syndrome_is_linear(code, seed):
    r = np.random.default_rng(seed)
    x, y = r.integers(0, 2, (2, 336))
    lhs = compute_syndrome(code, x ^ y)
    assert np.array_equal(lhs, compute_syndrome(code, x) ^ compute_syndrome(code, y))
    ref = np.array([sum(int(code.H[i, j]) * int(x[j]) for j in range(336)) % 2 for i in range(224)])
    assert np.array_equal(compute_syndrome(code, x), ref)


def test_single_flip_syndrome_is_column(code, rng):
    c = encode(code, rng.integers(0, 2, 112))
    for i in (0, 57, 200, 335):
        e = c.copy()
        e[i] ^= 1
        assert np.array_equal(compute_syndrome(code, e), code.H[:, i])


def test_alist_round_trip(tmp_path, code):
    p = tmp_path / "code.alist"
    write_alist(p, code)
    back = read_alist(p)
    assert np.array_equal(back.H, code.H) and back.seed == code.seed
    assert p.read_text().startswith("# L=336 K=112 seed=1")


# -- interleaver and mapping -------------------------------------------------


@given(st.integers(0, 2**31), st.integers(1, 400))
def test_interleaver_round_trip(seed, n):
    pi = Interleaver(n, seed)
    v = np.random.default_rng(seed).standard_normal((n, 4))
    assert np.array_equal(pi.deinterleave(pi.interleave(v)), v)
    assert np.array_equal(np.sort(pi.perm), np.arange(n))


def test_interleaver_stable_and_documented():
    pi = Interleaver(336, 7)
    assert np.array_equal(pi.perm, np.random.default_rng(7).permutation(336))
    bits = np.arange(336)
    # bit i travels on position perm[i]
    assert np.array_equal(pi.interleave(bits)[pi.perm], bits)
    with pytest.raises(ValueError):
        pi.interleave(np.zeros(335))


def test_bpsk_mapping():
    assert np.array_equal(map_symbols([0, 1, 1, 0]), [1, -1, -1, 1])
    assert np.allclose(np.mean(np.abs(BPSK.points) ** 2), 1)


def test_qpsk_unit_energy_and_labels():
    q = Constellation.qam(2)
    assert np.isclose(np.mean(np.abs(q.points) ** 2), 1)
    assert np.allclose(map_symbols([0, 0, 1, 1], q), [q.points[0], q.points[3]])
    with pytest.raises(ValueError):
        Constellation.qam(3)


def test_joint_alphabet_order():
    assert np.array_equal(BPSK.joint_a, [1, 1, -1, -1])
    assert np.array_equal(BPSK.joint_b, [1, -1, 1, -1])
    assert np.array_equal(BPSK.superimposed, [2, 0, 0, -2])


@given(st.integers(0, 2**32 - 1), st.sampled_from([1, 2]))
def test_distribution_relabeling_round_trip(seed, Q):
    r = np.random.default_rng(seed)
    p = r.dirichlet(np.ones(4), size=6 * Q)
    sym = bit_pairs_to_symbols(p, Q)
    assert sym.shape == (6, 4**Q)
    assert np.allclose(sym.sum(axis=1), 1)
    assert np.allclose(symbols_to_bit_pairs(sym, Q), p)


def test_uniform_maps_to_uniform():
    u = np.full((4, 4), 0.25)
    assert np.allclose(bit_pairs_to_symbols(u, 2), 1 / 16)


# -- PNC hard decision -------------------------------------------------------


def test_pnc_map_examples():
    assert pnc_map(np.array([0.1, 0.6, 0.2, 0.1])) == 1
    assert pnc_map(np.array([0.7, 0.1, 0.1, 0.1])) == 0
    assert pnc_map(np.array([0.1, 0.1, 0.1, 0.7])) == 0
    # tie between state 0 and state 1 goes to the lower index
    assert pnc_map(np.array([0.4, 0.4, 0.1, 0.1])) == 0


@given(st.integers(0, 2**32 - 1), st.floats(1e-3, 1e3))
def test_pnc_map_scale_invariant(seed, c):
    p = np.random.default_rng(seed).dirichlet(np.ones(4), size=20)
    assert np.array_equal(pnc_map(p), pnc_map(c * p))


# -- joint decoding ----------------------------------------------------------


@pytest.mark.parametrize("H", TREE_CODES)
@given(seed=st.integers(0, 2**32 - 1))
def test_gspa_exact_on_cycle_free_codes(H, seed):
    code = LdpcCode.from_parity_check(H)
    prior = random_prior(np.random.default_rng(seed), code.block_length)
    res = joint_gspa_decode(code, prior, max_iters=12, early_stop=False)
    exact = enumerate_joint_marginals(code, prior)
    assert np.max(np.abs(res.posterior - exact)) < 1e-9


def test_gspa_certainty_fixed_point(code, rng):
    ca = encode(code, rng.integers(0, 2, 112))
    cb = encode(code, rng.integers(0, 2, 112))
    prior = np.zeros((336, 4))
    prior[np.arange(336), 2 * ca + cb] = 1.0
    res = joint_gspa_decode(code, prior, max_iters=3)
    assert res.converged and res.iterations == 1
    assert np.allclose(res.posterior, prior, atol=1e-12)
    assert np.array_equal(res.c_R, ca ^ cb)


def test_gspa_corrects_noisy_soft_input(code, rng):
    ca = encode(code, rng.integers(0, 2, 112))
    cb = encode(code, rng.integers(0, 2, 112))
    truth = 2 * ca + cb
    prior = np.full((336, 4), 0.1)
    prior[np.arange(336), truth] = 0.7
    flip = rng.choice(336, 15, replace=False)  # mislead some positions
    prior[flip] = 0.1
    prior[flip, (truth[flip] + 1) % 4] = 0.7
    res = joint_gspa_decode(code, prior, max_iters=20)
    assert res.converged
    assert np.array_equal(res.c_R, ca ^ cb) and not res.syndrome.any()


@given(st.integers(0, 2**32 - 1), st.sampled_from([1e-300, 1e-12, 0.0]))
def test_gspa_output_valid_under_extreme_priors(code, seed, eps):
    r = np.random.default_rng(seed)
    prior = np.full((336, 4), eps)
    prior[np.arange(336), r.integers(0, 4, 336)] = 1.0
    res = joint_gspa_decode(code, prior, max_iters=3)
    assert np.all(np.isfinite(res.posterior)) and np.all(res.posterior >= 0)
    assert np.allclose(res.posterior.sum(axis=1), 1, atol=1e-9)


def test_gspa_rejects_bad_input(code):
    with pytest.raises(ValueError):
        joint_gspa_decode(code, np.full((335, 4), 0.25))
    with pytest.raises(ValueError):
        joint_gspa_decode(code, np.full((336, 4), 0.25), max_iters=0)

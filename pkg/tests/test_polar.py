"""Polar transform and SC decoder unit tests."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from parapolar import (
    LLR_SAT,
    CodeConfig,
    ConfigurationError,
    DomainError,
    bit_reversal_permutation,
    polar_encode,
    sc_decode,
)


def _gn(n: int) -> np.ndarray:
    """G_N by encoding the identity rows (linearity)."""
    N = 2**n
    return np.stack([polar_encode(np.eye(N, dtype=np.uint8)[i]) for i in range(N)])


def test_bit_reversal_examples():
    assert bit_reversal_permutation(3, 3) == 6
    assert bit_reversal_permutation(0, 5) == 0
    assert bit_reversal_permutation(5, 3) == 5


def test_bit_reversal_rejects_out_of_range():
    with pytest.raises(DomainError):
        bit_reversal_permutation(8, 3)
    with pytest.raises(DomainError):
        bit_reversal_permutation(-1, 3)


def test_encode_n1():
    x = polar_encode(np.array([0, 1], dtype=np.uint8))
    assert x.tolist() == [1, 1]


def test_encode_zero_is_zero():
    for n in range(5):
        u = np.zeros(2**n, dtype=np.uint8)
        assert not polar_encode(u).any()


def test_encode_last_row_all_ones():
    x = polar_encode(np.array([0, 0, 0, 1], dtype=np.uint8))
    assert x.tolist() == [1, 1, 1, 1]


@pytest.mark.parametrize("n", [0, 1, 2, 3, 4])
def test_generator_is_involution_matrix(n):
    G = _gn(n)
    N = 2**n
    assert np.array_equal((G @ G) % 2, np.eye(N, dtype=np.uint8))


@given(st.integers(min_value=0, max_value=10), st.integers(min_value=0, max_value=2**32 - 1))
@settings(max_examples=60, deadline=None)
def test_involution_random(n, seed):
    u = np.random.default_rng(seed).integers(0, 2, size=2**n, dtype=np.uint8)
    assert np.array_equal(polar_encode(polar_encode(u)), u)


def test_encode_rejects_bad_length():
    with pytest.raises(DomainError):
        polar_encode(np.array([0, 1, 0], dtype=np.uint8))


def _all_frozen_but_last(N):
    mask = np.ones(N, dtype=np.uint8)
    mask[-1] = 0
    return mask


def test_sc_n2_positive_llrs():
    code = CodeConfig(n=1, frozen_mask=np.array([1, 0], dtype=np.uint8))
    u = sc_decode(np.array([5.0, 5.0]), code)
    assert u.tolist() == [0, 0]


def test_sc_n2_negative_llrs():
    # x = (u2, u2) once u1 is frozen to 0, so negative LLRs flip u2
    code = CodeConfig(n=1, frozen_mask=np.array([1, 0], dtype=np.uint8))
    u = sc_decode(np.array([-5.0, -5.0]), code)
    assert u.tolist() == [0, 1]


def test_sc_n2_matches_map_brute_force():
    code = CodeConfig(n=1, frozen_mask=np.array([1, 0], dtype=np.uint8))
    rng = np.random.default_rng(7)
    for _ in range(200):
        llrs = rng.normal(scale=3.0, size=2)
        got = sc_decode(llrs, code)
        # enumerate the two valid messages, score ln P(y|x) up to a constant
        best, best_score = None, -np.inf
        for u2 in (0, 1):
            u = np.array([0, u2], dtype=np.uint8)
            x = polar_encode(u)
            score = float(np.sum(np.where(x == 0, llrs, 0.0)))
            if score > best_score:
                best, best_score = u, score
        assert np.array_equal(got, best)


def test_sc_all_frozen_returns_values_verbatim():
    vals = np.array([1, 0, 1, 1], dtype=np.uint8)
    code = CodeConfig(n=2, frozen_mask=np.ones(4, dtype=np.uint8), frozen_values=vals)
    u = sc_decode(np.zeros(4), code)
    assert np.array_equal(u, vals)


@pytest.mark.parametrize("n", [1, 2, 3, 4, 5, 6])
def test_noiseless_recovery(n):
    N = 2**n
    rng = np.random.default_rng(n)
    mask = (rng.random(N) < 0.4).astype(np.uint8)
    vals = rng.integers(0, 2, size=int(mask.sum()), dtype=np.uint8)
    code = CodeConfig(n=n, frozen_mask=mask, frozen_values=vals)
    u = rng.integers(0, 2, size=N, dtype=np.uint8)
    u[mask == 1] = vals
    x = polar_encode(u)
    llrs = np.where(x == 0, np.inf, -np.inf)
    assert np.array_equal(sc_decode(llrs, code), u)


def test_infinite_llrs_saturate_not_nan():
    code = CodeConfig(n=3, frozen_mask=np.zeros(8, dtype=np.uint8))
    llrs = np.array([np.inf, -np.inf] * 4)
    u = sc_decode(llrs, code)
    assert u.shape == (8,)
    assert set(np.unique(u)) <= {0, 1}
    assert LLR_SAT == 100.0


def test_known_bit_equals_frozen_extension():
    rng = np.random.default_rng(11)
    for n in (2, 3, 4):
        N = 2**n
        for _ in range(25):
            mask = (rng.random(N) < 0.3).astype(np.uint8)
            vals = rng.integers(0, 2, size=int(mask.sum()), dtype=np.uint8)
            code = CodeConfig(n=n, frozen_mask=mask, frozen_values=vals)
            free = np.flatnonzero(mask == 0)
            if free.size == 0:
                continue
            p = int(rng.choice(free))
            b = int(rng.integers(0, 2))
            llrs = rng.normal(size=N)

            got = sc_decode(llrs, code, known={p: b})

            mask2 = mask.copy()
            mask2[p] = 1
            vals2 = np.zeros(int(mask2.sum()), dtype=np.uint8)
            idx2 = np.flatnonzero(mask2)
            lookup = dict(zip(np.flatnonzero(mask), vals))
            lookup[p] = b
            for j, q in enumerate(idx2):
                vals2[j] = lookup[int(q)]
            want = sc_decode(llrs, CodeConfig(n=n, frozen_mask=mask2, frozen_values=vals2))
            assert np.array_equal(got, want)


def test_known_conflicting_with_frozen_rejected():
    code = CodeConfig(
        n=1, frozen_mask=np.array([1, 0], dtype=np.uint8),
        frozen_values=np.array([0], dtype=np.uint8),
    )
    with pytest.raises(ConfigurationError):
        sc_decode(np.zeros(2), code, known={0: 1})


def test_exact_and_minsum_agree_noiseless():
    rng = np.random.default_rng(3)
    for n in (2, 4):
        N = 2**n
        mask = (rng.random(N) < 0.5).astype(np.uint8)
        code = CodeConfig(n=n, frozen_mask=mask)
        u = rng.integers(0, 2, size=N, dtype=np.uint8)
        u[mask == 1] = 0
        x = polar_encode(u)
        llrs = (1.0 - 2.0 * x.astype(np.float64)) * 20.0
        assert np.array_equal(
            sc_decode(llrs, code, rule="exact"), sc_decode(llrs, code, rule="minsum")
        )


def test_sc_rejects_wrong_llr_length():
    code = CodeConfig(n=2, frozen_mask=np.zeros(4, dtype=np.uint8))
    with pytest.raises(DomainError):
        sc_decode(np.zeros(3), code)

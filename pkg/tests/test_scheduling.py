"""Staircase scheduling, combining matrices, prefix-rank verification."""

import itertools
import math

import numpy as np
import pytest

from parapolar import (
    ConstructionError,
    DomainError,
    OrderingScheme,
    combine_subblocks,
    make_ordering,
    scheme_to_text,
    staircase_assign,
    verify_prefix_rank,
)


def _gf2_solve(A, b):
    """Plain Gaussian elimination over GF(2); A (R,Q), b (R,L); returns (Q,L).

    Independent of the package's solver on purpose."""
    A = np.array(A, dtype=np.uint8) & 1
    b = np.array(b, dtype=np.uint8) & 1
    R, Q = A.shape
    row = 0
    piv = []
    for col in range(Q):
        sel = None
        for r in range(row, R):
            if A[r, col]:
                sel = r
                break
        if sel is None:
            continue
        A[[row, sel]] = A[[sel, row]]
        b[[row, sel]] = b[[sel, row]]
        for r in range(R):
            if r != row and A[r, col]:
                A[r] ^= A[row]
                b[r] ^= b[row]
        piv.append(col)
        row += 1
    if len(piv) != Q:
        raise AssertionError("system not full rank")
    x = np.zeros((Q, b.shape[1]), dtype=np.uint8)
    for r, col in enumerate(piv):
        x[col] = b[r]
    return x


class TestOrderingScheme:
    def test_first_matrix_must_be_identity(self):
        rev = np.eye(3, dtype=np.uint8)[::-1]
        with pytest.raises(DomainError):
            OrderingScheme(M=1, Q=3, matrices=(rev,))

    def test_singular_matrix_rejected(self):
        A2 = np.ones((2, 2), dtype=np.uint8)
        with pytest.raises(DomainError):
            OrderingScheme(M=2, Q=2, matrices=(np.eye(2, dtype=np.uint8), A2))

    def test_shape_checked(self):
        with pytest.raises(DomainError):
            OrderingScheme(M=1, Q=3, matrices=(np.eye(2, dtype=np.uint8),))

    def test_matrix_count_checked(self):
        with pytest.raises(DomainError):
            OrderingScheme(M=2, Q=2, matrices=(np.eye(2, dtype=np.uint8),))

    def test_row_masks_identity(self):
        s = make_ordering(1, 4)
        assert s.row_masks(1) == [8, 4, 2, 1]


class TestMakeOrdering:
    def test_single_channel_is_identity(self):
        for Q in (1, 2, 5, 8):
            s = make_ordering(1, Q)
            assert s.M == 1 and s.verified
            assert np.array_equal(s.matrices[0], np.eye(Q, dtype=np.uint8))

    def test_two_channels_identity_reversal(self):
        s = make_ordering(2, 3)
        assert np.array_equal(s.matrices[1], np.eye(3, dtype=np.uint8)[::-1])
        assert s.verified

    def test_q3_split_1_2_rank(self):
        # stacking e1 with the reversal prefix {e3, e2} reaches full rank
        s = make_ordering(2, 3)
        rows = np.vstack([s.matrices[0][:1], s.matrices[1][:2]])
        x = _gf2_solve(rows, np.eye(3, dtype=np.uint8))
        assert x.shape == (3, 3)

    def test_three_channel_polar_rows_frozen(self):
        s = make_ordering(3, 4)
        expected = np.array(
            [
                [1, 1, 1, 1],
                [1, 0, 1, 0],
                [1, 1, 0, 0],
                [1, 0, 0, 0],
            ],
            dtype=np.uint8,
        )
        assert np.array_equal(s.matrices[2], expected)
        assert s.verified

    def test_three_channels_need_power_of_two(self):
        with pytest.raises(DomainError):
            make_ordering(3, 6)

    def test_four_channels_strict_fails(self):
        with pytest.raises(ConstructionError):
            make_ordering(4, 4, search_budget=50)

    def test_four_channels_best_effort_reports_gaps(self):
        s = make_ordering(4, 4, best_effort=True, search_budget=20)
        assert not s.verified
        assert len(s.known_gaps) > 0
        # the fallback shares prefix spans between channels 3 and 4, so only
        # compositions touching both can fail
        for comp in s.known_gaps:
            assert comp[2] >= 1 and comp[3] >= 1

    def test_four_channels_trivial_q1(self):
        s = make_ordering(4, 1)
        assert s.verified and len(s.matrices) == 4

    def test_bad_args(self):
        with pytest.raises(DomainError):
            make_ordering(0, 4)
        with pytest.raises(DomainError):
            make_ordering(2, 0)


class TestVerifyPrefixRank:
    def test_identity_reversal_q2(self):
        rep = verify_prefix_rank(make_ordering(2, 2))
        assert rep.ok and rep.first_failure is None and rep.num_checked == 3

    def test_identity_pair_fails_at_1_1(self):
        s = OrderingScheme(
            M=2, Q=2, matrices=(np.eye(2, dtype=np.uint8), np.eye(2, dtype=np.uint8))
        )
        rep = verify_prefix_rank(s)
        assert not rep.ok
        assert rep.first_failure == (1, 1)

    @pytest.mark.parametrize("M,Q", [(2, 2), (2, 3), (2, 4), (2, 8), (3, 2), (3, 4), (3, 8)])
    def test_constructed_schemes_pass(self, M, Q):
        rep = verify_prefix_rank(make_ordering(M, Q))
        assert rep.ok
        assert rep.num_checked == math.comb(Q + M - 1, M - 1)


class TestStaircase:
    def test_block_one_walks_the_diagonal(self):
        a = staircase_assign(3, 5)
        assert [a.slot_of(1, q) for q in (1, 2, 3)] == [1, 2, 3]

    def test_block_two_tier_one(self):
        a = staircase_assign(3, 5)
        assert a.slot_of(2, 1) == 2

    def test_num_slots(self):
        assert staircase_assign(4, 10).num_slots == 13

    def test_startup_boundary_empty(self):
        a = staircase_assign(4, 6)
        for q in range(2, 5):
            assert a.block_at(1, q) is None
        assert a.block_at(1, 1) == 1

    def test_empty_count_is_q_times_q_minus_1(self):
        # start and end triangles together
        a = staircase_assign(3, 5)
        assert len(a.structural_empties()) == 6

    def test_round_trip(self):
        a = staircase_assign(4, 7)
        for b in range(1, 8):
            for q in range(1, 5):
                assert a.block_at(a.slot_of(b, q), q) == b

    def test_deeper_tiers_reference_older_blocks(self):
        a = staircase_assign(4, 9)
        for s in range(1, a.num_slots + 1):
            live = [(q, a.block_at(s, q)) for q in range(1, 5) if a.block_at(s, q)]
            for (q1, b1), (q2, b2) in zip(live, live[1:]):
                assert q2 > q1 and b2 < b1

    def test_domain_errors(self):
        a = staircase_assign(3, 4)
        with pytest.raises(DomainError):
            a.slot_of(5, 1)
        with pytest.raises(DomainError):
            a.slot_of(1, 4)
        with pytest.raises(DomainError):
            a.block_at(0, 1)
        with pytest.raises(DomainError):
            staircase_assign(3, 0)


class TestCombineSubblocks:
    def test_channel_one_is_identity(self):
        s = make_ordering(2, 3)
        sb = np.arange(12, dtype=np.uint8).reshape(3, 4) & 1
        out = combine_subblocks(1, sb, s)
        for j, p in enumerate(out):
            assert np.array_equal(p.bits, sb[j])
            assert p.tier == j + 1 and p.channel == 1

    def test_channel_two_reverses(self):
        s = make_ordering(2, 3)
        sb = np.array([[1, 0], [0, 1], [1, 1]], dtype=np.uint8)
        out = combine_subblocks(2, sb, s)
        assert np.array_equal(out[0].bits, sb[2])
        assert np.array_equal(out[1].bits, sb[1])
        assert np.array_equal(out[2].bits, sb[0])

    def test_channel_three_q2_xors(self):
        s = make_ordering(3, 2)
        sb = np.array([[1, 0, 1], [1, 1, 0]], dtype=np.uint8)
        out = combine_subblocks(3, sb, s)
        assert np.array_equal(out[0].bits, sb[0] ^ sb[1])

    def test_shape_mismatch(self):
        s = make_ordering(2, 3)
        with pytest.raises(DomainError):
            combine_subblocks(1, np.zeros((2, 4), dtype=np.uint8), s)

    def test_combine_then_solve_round_trip(self):
        rng = np.random.default_rng(5)
        s = make_ordering(3, 4)
        sb = rng.integers(0, 2, size=(4, 16), dtype=np.uint8)
        for ch in (1, 2, 3):
            out = combine_subblocks(ch, sb, s)
            A = np.stack([p.row for p in out])
            b = np.stack([p.bits for p in out])
            assert np.array_equal(_gf2_solve(A, b), sb)


class TestSolvability:
    """Any composition with sum >= Q over a verified scheme yields a solvable
    GF(2) system for the block's sub-blocks."""

    @pytest.mark.parametrize("M,Q", [(2, 4), (2, 8), (3, 4), (3, 8)])
    def test_exact_compositions_solve(self, M, Q):
        rng = np.random.default_rng(71)
        scheme = make_ordering(M, Q)
        sb = rng.integers(0, 2, size=(Q, 8), dtype=np.uint8)
        payloads = {ch: combine_subblocks(ch, sb, scheme) for ch in range(1, M + 1)}
        for comp in itertools.product(range(Q + 1), repeat=M):
            if sum(comp) != Q:
                continue
            rows, rhs = [], []
            for ch, q in enumerate(comp, start=1):
                for p in payloads[ch][:q]:
                    rows.append(p.row)
                    rhs.append(p.bits)
            assert np.array_equal(_gf2_solve(np.stack(rows), np.stack(rhs)), sb)

    def test_overfull_composition_solves(self):
        rng = np.random.default_rng(72)
        scheme = make_ordering(3, 4)
        sb = rng.integers(0, 2, size=(4, 8), dtype=np.uint8)
        rows, rhs = [], []
        for ch, q in zip((1, 2, 3), (2, 2, 2)):
            for p in combine_subblocks(ch, sb, scheme)[:q]:
                rows.append(p.row)
                rhs.append(p.bits)
        assert np.array_equal(_gf2_solve(np.stack(rows), np.stack(rhs)), sb)


class TestSchemeText:
    def test_polar_rows_in_dump(self):
        text = scheme_to_text(make_ordering(3, 4))
        assert "channel 3\n1111\n1010\n1100\n1000" in text

    def test_identity_first(self):
        text = scheme_to_text(make_ordering(2, 2))
        assert text.startswith("channel 1\n10\n01\nchannel 2\n01\n10\n")

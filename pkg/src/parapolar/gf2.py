"""GF(2) linear algebra on bit-packed rows.

A row over GF(2)^Q is an int whose bit (Q-1-j) is the coefficient of column j
(0-based), i.e. the leftmost matrix column sits in the most significant bit.
This keeps printed binary literals readable as matrix rows.
"""

from typing import Iterable, List, Sequence, Tuple

import numpy as np


def row_to_mask(row: Sequence[int]) -> int:
    m = 0
    for b in row:
        m = (m << 1) | (int(b) & 1)
    return m


def mask_to_row(mask: int, Q: int) -> np.ndarray:
    return np.array([(mask >> (Q - 1 - j)) & 1 for j in range(Q)], dtype=np.uint8)


def matrix_to_masks(mat: np.ndarray) -> List[int]:
    return [row_to_mask(r) for r in np.asarray(mat)]


def gf2_rank(rows: Iterable[int]) -> int:
    """Rank of the span of bit-packed rows, by Gaussian elimination."""
    pivots: List[int] = []
    rank = 0
    for row in rows:
        r = int(row)
        for p in pivots:
            r = min(r, r ^ p)
        if r:
            pivots.append(r)
            pivots.sort(reverse=True)
            rank += 1
    return rank


def gf2_mat_mul_masks(a_rows: Sequence[int], b_rows: Sequence[int], Q: int) -> List[int]:
    """Row masks of A*B where A, B are Q x Q with rows given as masks."""
    out = []
    for ra in a_rows:
        acc = 0
        for j in range(Q):
            if (ra >> (Q - 1 - j)) & 1:
                acc ^= b_rows[j]
        out.append(acc)
    return out


def gf2_solve(rows: Sequence[int], payloads: np.ndarray, Q: int) -> Tuple[bool, np.ndarray]:
    """Solve A x = b over GF(2) for Q unknown bit-vectors.

    rows: bit-packed coefficient rows (each references a subset of the Q
    unknowns); payloads: matching (len(rows), L) uint8 right-hand sides.
    Returns (solvable, x) with x of shape (Q, L); solvable is False when the
    rows do not reach rank Q.
    """
    work = [int(r) for r in rows]
    rhs = np.ascontiguousarray(payloads, dtype=np.uint8).copy()
    if rhs.ndim != 2 or rhs.shape[0] != len(work):
        raise ValueError("payloads must be one row per coefficient row")
    nrows = len(work)
    pivot_of_col = [-1] * Q
    rank = 0
    for col in range(Q):
        bit = 1 << (Q - 1 - col)
        pivot = -1
        for i in range(rank, nrows):
            if work[i] & bit:
                pivot = i
                break
        if pivot < 0:
            continue
        work[rank], work[pivot] = work[pivot], work[rank]
        rhs[[rank, pivot]] = rhs[[pivot, rank]]
        for i in range(nrows):
            if i != rank and (work[i] & bit):
                work[i] ^= work[rank]
                rhs[i] ^= rhs[rank]
        pivot_of_col[col] = rank
        rank += 1
    if rank < Q:
        return False, np.zeros((Q, rhs.shape[1]), dtype=np.uint8)
    x = np.zeros((Q, rhs.shape[1]), dtype=np.uint8)
    for col in range(Q):
        x[col] = rhs[pivot_of_col[col]]
    return True, x

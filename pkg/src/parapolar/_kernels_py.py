"""Pure-python polar kernels.

Numpy implementation of the hot inner loops. The compiled extension
``_kernels`` exports the same four functions with identical semantics;
``_backend`` picks whichever is available. Keep the two in lockstep: the
equivalence is pinned by tests/test_backends.py.

LLR convention: natural log of P(y|bit=0)/P(y|bit=1). Non-finite inputs are
saturated to +-LLR_SAT before the recursion so the f-update never sees inf-inf.
"""

import numpy as np

# Saturation magnitude for non-finite input LLRs (see module docstring).
LLR_SAT = 100.0


def bitrev_indices(n: int) -> np.ndarray:
    """Index array p with p[i] = bit-reversal of i over n bits."""
    N = 1 << n
    idx = np.arange(N, dtype=np.int64)
    rev = np.zeros(N, dtype=np.int64)
    for _ in range(n):
        rev = (rev << 1) | (idx & 1)
        idx >>= 1
    return rev


def butterfly(u: np.ndarray) -> np.ndarray:
    """u * F^(tensor n) over GF(2), in O(N log N).

    Stage d folds the second half of each 2d-wide group into the first half,
    innermost groups first, which matches the recursive Kronecker structure.
    """
    v = np.ascontiguousarray(u, dtype=np.uint8).copy()
    N = v.shape[0]
    d = 1
    while d < N:
        step = 2 * d
        for s in range(0, N, step):
            v[s:s + d] ^= v[s + d:s + step]
        d *= 2
    return v


def _f_exact(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # 2*atanh(tanh(a/2)*tanh(b/2)) in a form that cannot overflow:
    # sign(a)sign(b) * (min|.| + log1p(e^-(|a|+|b|)) - log1p(e^-||a|-|b||))
    fa = np.abs(a)
    fb = np.abs(b)
    m = np.minimum(fa, fb)
    r = m + np.log1p(np.exp(-(fa + fb))) - np.log1p(np.exp(-np.abs(fa - fb)))
    return np.sign(a) * np.sign(b) * r


def _f_minsum(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.sign(a) * np.sign(b) * np.minimum(np.abs(a), np.abs(b))


def _saturate(llrs: np.ndarray) -> np.ndarray:
    out = np.asarray(llrs, dtype=np.float64).copy()
    out[np.isposinf(out)] = LLR_SAT
    out[np.isneginf(out)] = -LLR_SAT
    out[np.isnan(out)] = 0.0
    return out


def _sc_node(L, pos, forced_mask, forced_vals, u_out, minsum, genie_u, err_out):
    """Recursive SC step. L carries the LLRs of this node's codeword bits in
    transform order; returns those codeword bits as decided."""
    length = L.shape[0]
    if length == 1:
        llr = L[0]
        hard = 0 if llr >= 0.0 else 1  # tie (exactly 0) decodes to 0
        if genie_u is not None:
            err_out[pos] = 1 if hard != genie_u[pos] else 0
            u_out[pos] = genie_u[pos]
        elif forced_mask[pos]:
            u_out[pos] = forced_vals[pos]
        else:
            u_out[pos] = hard
        return u_out[pos:pos + 1].copy()
    half = length // 2
    a = L[:half]
    b = L[half:]
    Lf = _f_minsum(a, b) if minsum else _f_exact(a, b)
    cl = _sc_node(Lf, pos, forced_mask, forced_vals, u_out, minsum, genie_u, err_out)
    Lg = b + (1.0 - 2.0 * cl.astype(np.float64)) * a
    cr = _sc_node(Lg, pos + half, forced_mask, forced_vals, u_out, minsum, genie_u, err_out)
    return np.concatenate([cl ^ cr, cr])


def sc_kernel(llrs_w: np.ndarray, forced_mask: np.ndarray, forced_vals: np.ndarray,
              minsum: bool = False) -> np.ndarray:
    """SC decode. llrs_w are channel LLRs already permuted into transform
    (w) order; forced_mask/forced_vals force u positions (frozen or known).
    Returns the u estimate."""
    L = _saturate(llrs_w)
    N = L.shape[0]
    u_out = np.zeros(N, dtype=np.uint8)
    _sc_node(L, 0, np.asarray(forced_mask, dtype=np.uint8),
             np.asarray(forced_vals, dtype=np.uint8), u_out, bool(minsum), None, None)
    return u_out


def genie_kernel(llrs_w: np.ndarray, u_true: np.ndarray, minsum: bool = False) -> np.ndarray:
    """Genie-aided SC pass: every leaf is forced to the true u after recording
    whether the raw hard decision would have been wrong. Returns the per-index
    first-error indicators used by Monte-Carlo reliability estimation."""
    L = _saturate(llrs_w)
    N = L.shape[0]
    u_out = np.zeros(N, dtype=np.uint8)
    err = np.zeros(N, dtype=np.uint8)
    tru = np.ascontiguousarray(u_true, dtype=np.uint8)
    _sc_node(L, 0, np.zeros(N, dtype=np.uint8), np.zeros(N, dtype=np.uint8),
             u_out, bool(minsum), tru, err)
    return err

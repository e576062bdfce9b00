# cython: language_level=3
"""Compiled polar kernels.

Same four entry points and semantics as _kernels_py (the pure-python twin);
see that module's docstring for the conventions. tests/test_backends.py pins
the equivalence of the two implementations.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, fabs, fmin, isinf, isnan, log1p

cnp.import_array()

LLR_SAT = 100.0
cdef double _SAT = 100.0


def bitrev_indices(int n):
    """Index array p with p[i] = bit-reversal of i over n bits."""
    N = 1 << n
    idx = np.arange(N, dtype=np.int64)
    rev = np.zeros(N, dtype=np.int64)
    for _ in range(n):
        rev = (rev << 1) | (idx & 1)
        idx >>= 1
    return rev


def butterfly(u):
    """u * F^(tensor n) over GF(2), in O(N log N)."""
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] v = np.ascontiguousarray(u, dtype=np.uint8).copy()
    cdef unsigned char[::1] mv = v
    cdef Py_ssize_t N = v.shape[0]
    cdef Py_ssize_t d = 1, s, k
    while d < N:
        for s in range(0, N, 2 * d):
            for k in range(d):
                mv[s + k] ^= mv[s + d + k]
        d *= 2
    return v


cdef void _sc_node(double* llr, unsigned char* cw, Py_ssize_t N,
                   Py_ssize_t depth, Py_ssize_t pos, Py_ssize_t length,
                   const unsigned char* fmask, const unsigned char* fvals,
                   unsigned char* u_out, bint minsum,
                   const unsigned char* genie_u, unsigned char* err) noexcept nogil:
    cdef Py_ssize_t half, k
    cdef double a, b, fa, fb, r
    cdef double* Lcur = llr + depth * N
    cdef double* Lnext = llr + (depth + 1) * N
    cdef unsigned char* Ccur = cw + depth * N
    cdef unsigned char* Cnext = cw + (depth + 1) * N
    cdef unsigned char hard, bit
    if length == 1:
        a = Lcur[pos]
        hard = 0 if a >= 0.0 else 1
        if genie_u != NULL:
            err[pos] = 1 if hard != genie_u[pos] else 0
            bit = genie_u[pos]
        elif fmask[pos]:
            bit = fvals[pos]
        else:
            bit = hard
        u_out[pos] = bit
        Ccur[pos] = bit
        return
    half = length // 2
    for k in range(half):
        a = Lcur[pos + k]
        b = Lcur[pos + half + k]
        if minsum:
            r = fmin(fabs(a), fabs(b))
        else:
            fa = fabs(a)
            fb = fabs(b)
            r = fmin(fa, fb) + log1p(exp(-(fa + fb))) - log1p(exp(-fabs(fa - fb)))
        if (a < 0.0) != (b < 0.0):
            r = -r
        if a == 0.0 or b == 0.0:
            r = 0.0
        Lnext[pos + k] = r
    _sc_node(llr, cw, N, depth + 1, pos, half, fmask, fvals, u_out, minsum, genie_u, err)
    for k in range(half):
        a = Lcur[pos + k]
        b = Lcur[pos + half + k]
        Lnext[pos + half + k] = b + (1.0 - 2.0 * Cnext[pos + k]) * a
    _sc_node(llr, cw, N, depth + 1, pos + half, half, fmask, fvals, u_out, minsum, genie_u, err)
    for k in range(half):
        Ccur[pos + k] = Cnext[pos + k] ^ Cnext[pos + half + k]
        Ccur[pos + half + k] = Cnext[pos + half + k]


cdef cnp.ndarray _prep_llrs(object llrs_w):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] L = np.array(llrs_w, dtype=np.float64)
    cdef double[::1] mv = L
    cdef Py_ssize_t i
    for i in range(mv.shape[0]):
        if isinf(mv[i]):
            mv[i] = _SAT if mv[i] > 0 else -_SAT
        elif isnan(mv[i]):
            mv[i] = 0.0
    return L


def sc_kernel(llrs_w, forced_mask, forced_vals, minsum=False):
    """SC decode over transform-order LLRs; see _kernels_py.sc_kernel."""
    cdef cnp.ndarray[cnp.float64_t, ndim=1] L = _prep_llrs(llrs_w)
    cdef Py_ssize_t N = L.shape[0]
    cdef Py_ssize_t n = 0
    while (<Py_ssize_t> 1 << n) < N:
        n += 1
    cdef cnp.ndarray[cnp.float64_t, ndim=2] scr = np.zeros((n + 1, N), dtype=np.float64)
    cdef cnp.ndarray[cnp.uint8_t, ndim=2] cw = np.zeros((n + 1, N), dtype=np.uint8)
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] fm = np.ascontiguousarray(forced_mask, dtype=np.uint8)
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] fv = np.ascontiguousarray(forced_vals, dtype=np.uint8)
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] u_out = np.zeros(N, dtype=np.uint8)
    scr[0, :] = L
    _sc_node(&scr[0, 0], &cw[0, 0], N, 0, 0, N, &fm[0], &fv[0], &u_out[0],
             1 if minsum else 0, NULL, NULL)
    return u_out


def genie_kernel(llrs_w, u_true, minsum=False):
    """Genie-aided SC error indicators; see _kernels_py.genie_kernel."""
    cdef cnp.ndarray[cnp.float64_t, ndim=1] L = _prep_llrs(llrs_w)
    cdef Py_ssize_t N = L.shape[0]
    cdef Py_ssize_t n = 0
    while (<Py_ssize_t> 1 << n) < N:
        n += 1
    cdef cnp.ndarray[cnp.float64_t, ndim=2] scr = np.zeros((n + 1, N), dtype=np.float64)
    cdef cnp.ndarray[cnp.uint8_t, ndim=2] cw = np.zeros((n + 1, N), dtype=np.uint8)
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] tru = np.ascontiguousarray(u_true, dtype=np.uint8)
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] zeros = np.zeros(N, dtype=np.uint8)
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] u_out = np.zeros(N, dtype=np.uint8)
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] err = np.zeros(N, dtype=np.uint8)
    scr[0, :] = L
    _sc_node(&scr[0, 0], &cw[0, 0], N, 0, 0, N, &zeros[0], &zeros[0], &u_out[0],
             1 if minsum else 0, &tru[0], &err[0])
    return err

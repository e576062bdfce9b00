"""Binary polar encoding and successive-cancellation decoding.

The generator is G_N = B_N F^(tensor n) with F = [[1,0],[1,1]] and B_N the
bit-reversal permutation, acting on row vectors: x = u G_N. Encoding runs the
butterfly for F^(tensor n) and then applies B_N; G_N is an involution over
GF(2), which the tests verify by direct matrix multiplication for small N.

Index convention: u and x are 0-based everywhere in code. Written material
about the scheme usually numbers them 1..N; subtract one.

Decoding takes channel-order LLRs ln(P(y|x=0)/P(y|x=1)), permutes them by B_N
into transform order, and runs SC with the exact f-update by default (min-sum
available via rule="minsum"). Ties (LLR exactly 0) decode to bit 0. Non-finite
LLRs are saturated to +-LLR_SAT = +-100.0 before the recursion.

Known bits: positions decided by earlier processing (cancelled sub-blocks,
structurally empty tiers) are passed as a mapping and treated exactly like
additional frozen positions for the duration of the call.
"""

from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np

from ._backend import LLR_SAT, kernels
from .errors import ConfigurationError, DomainError

__all__ = [
    "LLR_SAT",
    "CodeConfig",
    "bit_reversal_permutation",
    "polar_encode",
    "sc_decode",
]


def bit_reversal_permutation(i: int, n: int) -> int:
    """Reverse the n-bit binary expansion of i.

    Parameters
    ----------
    i : index in [0, 2^n)
    n : exponent

    Returns
    -------
    int
        The integer whose n-bit expansion is i's reversed.
    """
    if n < 0:
        raise DomainError(f"exponent must be nonnegative, got {n}")
    if not 0 <= i < (1 << n):
        raise DomainError(f"index {i} out of range for n={n}")
    r = 0
    for _ in range(n):
        r = (r << 1) | (i & 1)
        i >>= 1
    return r


def _check_pow2_length(length: int) -> int:
    n = 0
    while (1 << n) < length:
        n += 1
    if (1 << n) != length:
        raise DomainError(f"length {length} is not a power of two")
    return n


@dataclass(frozen=True)
class CodeConfig:
    """A polar code: length N = 2^n, frozen positions and their values.

    frozen_mask is a length-N uint8 array with 1 at frozen positions.
    frozen_values holds one bit per frozen index, in increasing index order.
    The information set is the complement of the frozen set.
    """

    n: int
    frozen_mask: np.ndarray
    frozen_values: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.n < 0:
            raise DomainError("n must be nonnegative")
        mask = np.ascontiguousarray(self.frozen_mask, dtype=np.uint8)
        if mask.shape != (self.N,):
            raise DomainError(f"frozen_mask must have length {self.N}")
        object.__setattr__(self, "frozen_mask", mask)
        vals = self.frozen_values
        if vals is None:
            vals = np.zeros(int(mask.sum()), dtype=np.uint8)
        vals = np.ascontiguousarray(vals, dtype=np.uint8)
        if vals.shape != (int(mask.sum()),):
            raise DomainError("frozen_values length must match the frozen count")
        object.__setattr__(self, "frozen_values", vals)

    @property
    def N(self) -> int:
        return 1 << self.n

    @property
    def info_indices(self) -> np.ndarray:
        """Information positions, ascending."""
        return np.flatnonzero(self.frozen_mask == 0)

    def forced_arrays(self, known: Optional[Mapping[int, int]] = None):
        """Full-length (mask, values) arrays merging frozen and known bits.

        Raises ConfigurationError when a known index carries a value that
        conflicts with its frozen value.
        """
        mask = self.frozen_mask.copy()
        vals = np.zeros(self.N, dtype=np.uint8)
        vals[np.flatnonzero(mask)] = self.frozen_values
        if known:
            for idx, bit in known.items():
                idx = int(idx)
                bit = int(bit) & 1
                if not 0 <= idx < self.N:
                    raise DomainError(f"known index {idx} out of range")
                if mask[idx] and vals[idx] != bit:
                    raise ConfigurationError(
                        f"known bit at {idx} ({bit}) conflicts with frozen value {vals[idx]}"
                    )
                mask[idx] = 1
                vals[idx] = bit
        return mask, vals


def polar_encode(u: np.ndarray, n: Optional[int] = None) -> np.ndarray:
    """x = u G_N over GF(2) via the butterfly recursion, O(N log N).

    Parameters
    ----------
    u : bit sequence whose length is a power of two
    n : optional exponent; validated against len(u) when given

    Returns
    -------
    np.ndarray of uint8, channel-order codeword x.
    """
    u = np.ascontiguousarray(u, dtype=np.uint8)
    got_n = _check_pow2_length(u.shape[0])
    if n is not None and n != got_n:
        raise DomainError(f"u has length {u.shape[0]} but n={n} was declared")
    w = kernels.butterfly(u)
    return w[kernels.bitrev_indices(got_n)]


def sc_decode(
    llrs: np.ndarray,
    code: CodeConfig,
    known: Optional[Mapping[int, int]] = None,
    rule: str = "exact",
) -> np.ndarray:
    """Successive-cancellation decode.

    Parameters
    ----------
    llrs : channel-order LLRs, length N (ln P(y|x=0)/P(y|x=1))
    code : CodeConfig with frozen mask/values
    known : optional mapping u-index -> bit for externally cancelled positions
    rule : "exact" (default) or "minsum" f-update

    Returns
    -------
    np.ndarray of uint8: the u-domain estimate. Frozen and known positions are
    returned verbatim; information positions follow the SC hard decision with
    ties toward 0.
    """
    llrs = np.asarray(llrs, dtype=np.float64)
    if llrs.shape != (code.N,):
        raise DomainError(f"llrs must have length {code.N}")
    if rule not in ("exact", "minsum"):
        raise DomainError(f"unknown update rule {rule!r}")
    mask, vals = code.forced_arrays(known)
    llrs_w = llrs[kernels.bitrev_indices(code.n)]
    return kernels.sc_kernel(llrs_w, mask, vals, minsum=(rule == "minsum"))


def genie_error_indicators(
    llrs: np.ndarray, u_true: np.ndarray, rule: str = "exact"
) -> np.ndarray:
    """Genie-aided SC first-error indicators per u index (all positions forced
    to the truth after comparison). Used by Monte-Carlo reliability."""
    llrs = np.asarray(llrs, dtype=np.float64)
    n = _check_pow2_length(llrs.shape[0])
    llrs_w = llrs[kernels.bitrev_indices(n)]
    return kernels.genie_kernel(llrs_w, u_true, minsum=(rule == "minsum"))

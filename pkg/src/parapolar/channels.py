"""Channel and modulation models.

BIAWGN with unit symbol energy, 2^T-ASK with natural labeling for multilevel
coding, per-level LLRs for multistage decoding, capacity estimators
(Gauss-Hermite quadrature where exact structure helps, seeded Monte Carlo for
level capacities), and Rayleigh block-fading gains.

Conventions:
  - everything is per real dimension; complex channels use one ASK stream per
    real/imaginary component, so their rates and capacities are twice these.
  - level 1 is the least significant label bit. Label value L maps to the
    amplitude (2^T - 1 - 2L) / sqrt((4^T - 1) / 3), so for T=1 bit 0 -> +1 and
    bit 1 -> -1 (plain BPSK), and for T=2 the table is
        00 -> +3/sqrt(5), 01 -> +1/sqrt(5), 10 -> -1/sqrt(5), 11 -> -3/sqrt(5)
    reading the label as (level2 level1).
  - sum rates above 1 bit per complex use are split into T = ceil(log2 r)
    levels; feasibility against the actual level capacities is checked where
    rates are allocated, not here.
"""

import functools
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np
from scipy.special import logsumexp

from .errors import ConfigurationError, DomainError, ScopeError

__all__ = [
    "BiAwgnChannel",
    "MultilevelChannel",
    "FadingProcess",
    "decompose_levels",
    "map_bits_to_symbols",
    "awgn_transmit",
    "level_llr",
    "level_channel_sampler",
    "biawgn_capacity",
    "invert_biawgn_capacity",
    "level_capacities",
    "level_capacity_quadrature",
    "symbol_mi_mc",
    "symbol_mi_quadrature",
    "invert_symbol_capacity",
    "fading_sample",
    "fading_gains",
]

_HERM_NODES = 96


def _as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


@dataclass(frozen=True)
class BiAwgnChannel:
    """Binary-input AWGN: x in {+1,-1}, per-dimension noise deviation sigma."""

    sigma: float

    def __post_init__(self):
        if not (np.isfinite(self.sigma) and self.sigma > 0):
            raise DomainError(f"sigma must be finite and positive, got {self.sigma}")

    def llr(self, y: np.ndarray) -> np.ndarray:
        return 2.0 * np.asarray(y, dtype=np.float64) / (self.sigma**2)

    def llr_samples(self, rng: np.random.Generator, bits: np.ndarray) -> np.ndarray:
        """Channel LLRs for one transmission of the given bits (MC helper)."""
        x = 1.0 - 2.0 * np.asarray(bits, dtype=np.float64)
        y = x + rng.normal(0.0, self.sigma, size=x.shape)
        return self.llr(y)

    @property
    def capacity_hint(self) -> float:
        return biawgn_capacity(self.sigma)


@dataclass(frozen=True)
class MultilevelChannel:
    """2^T-ASK over AWGN with natural labeling (see module docstring)."""

    T: int
    sigma: float

    def __post_init__(self):
        if self.T < 1:
            raise DomainError("T must be >= 1")
        if not (np.isfinite(self.sigma) and self.sigma > 0):
            raise DomainError(f"sigma must be finite and positive, got {self.sigma}")
        if abs(float(np.mean(self.points**2)) - 1.0) > 1e-12:
            raise DomainError("constellation failed unit-energy normalization")

    @property
    def M_points(self) -> int:
        return 1 << self.T

    @property
    def points(self) -> np.ndarray:
        """Amplitude for each label value 0..2^T-1."""
        M = 1 << self.T
        raw = (M - 1) - 2.0 * np.arange(M)
        return raw / math.sqrt((M * M - 1) / 3.0)


@dataclass(frozen=True)
class FadingProcess:
    """Block fading descriptor: gain constant within a transmission,
    independent across transmissions. Only Rayleigh (unit mean-square) here."""

    distribution: str = "rayleigh"

    def __post_init__(self):
        if self.distribution != "rayleigh":
            raise DomainError(f"unsupported fading distribution {self.distribution!r}")


def decompose_levels(sum_rate: float) -> int:
    """T = ceil(log2 r) binary levels for sum rate r > 1 (bits per complex
    channel use; each real dimension carries a 2^T-ASK stream)."""
    if not np.isfinite(sum_rate):
        raise DomainError("sum_rate must be finite")
    if sum_rate <= 1.0:
        raise ScopeError(
            f"sum rate {sum_rate} is <= 1; use the binary path (T=1) directly"
        )
    return max(1, math.ceil(math.log2(sum_rate)))


def map_bits_to_symbols(level_bits: Sequence[np.ndarray], channel: MultilevelChannel) -> np.ndarray:
    """Combine T per-level bit sequences into amplitudes (level 1 = LSB)."""
    if len(level_bits) != channel.T:
        raise DomainError(f"need {channel.T} level sequences, got {len(level_bits)}")
    arrs = [np.ascontiguousarray(b, dtype=np.int64) for b in level_bits]
    length = arrs[0].shape[0]
    if any(a.shape != (length,) for a in arrs):
        raise DomainError("level bit sequences must have equal length")
    labels = np.zeros(length, dtype=np.int64)
    for t, a in enumerate(arrs):
        labels |= a << t
    return channel.points[labels]


def awgn_transmit(symbols: np.ndarray, sigma: float, seed) -> np.ndarray:
    """y = x + n with i.i.d. per-dimension Gaussian noise; seeded."""
    if not (np.isfinite(sigma) and sigma > 0):
        raise DomainError(f"sigma must be finite and positive, got {sigma}")
    x = np.asarray(symbols, dtype=np.float64)
    rng = _as_rng(seed)
    return x + rng.normal(0.0, sigma, size=x.shape)


def _level_candidates(channel: MultilevelChannel, level: int):
    """Constellation points grouped by (lower-label value, this-level bit)."""
    T = channel.T
    labels = np.arange(1 << T)
    low_mask = (1 << (level - 1)) - 1
    n_low = 1 << (level - 1)
    n_rest = 1 << (T - level)
    pts = np.empty((n_low, 2, n_rest))
    for v in range(n_low):
        for b in (0, 1):
            sel = labels[((labels & low_mask) == v) & (((labels >> (level - 1)) & 1) == b)]
            pts[v, b, :] = channel.points[sel]
    return pts


def level_llr(
    observations: np.ndarray,
    channel: MultilevelChannel,
    level: int,
    known_lower_bits: Sequence[np.ndarray] = (),
) -> np.ndarray:
    """Exact level-bit LLR given all lower-level bits.

    Sums p(y|x) over the constellation points consistent with the known lower
    bits, split by the level-th bit. For T=1 this is the BIAWGN 2y/sigma^2 up
    to floating error.
    """
    if not 1 <= level <= channel.T:
        raise DomainError(f"level {level} out of range for T={channel.T}")
    if len(known_lower_bits) != level - 1:
        raise ConfigurationError(
            f"level {level} needs {level - 1} lower-level bit sequences, "
            f"got {len(known_lower_bits)}"
        )
    y = np.asarray(observations, dtype=np.float64)
    low = np.zeros(y.shape[0], dtype=np.int64)
    for t, bits in enumerate(known_lower_bits):
        bits = np.asarray(bits, dtype=np.int64)
        if bits.shape != y.shape:
            raise DomainError("lower-level bit sequences must match observations")
        low |= bits << t
    pts = _level_candidates(channel, level)  # (n_low, 2, n_rest)
    inv2s2 = 1.0 / (2.0 * channel.sigma**2)
    cand0 = pts[low, 0, :]  # (L, n_rest)
    cand1 = pts[low, 1, :]
    e0 = -((y[:, None] - cand0) ** 2) * inv2s2
    e1 = -((y[:, None] - cand1) ** 2) * inv2s2
    return logsumexp(e0, axis=1) - logsumexp(e1, axis=1)


class _LevelChannelSampler:
    """Adapter making one level of a MultilevelChannel usable by
    mc_reliability: lower levels drawn uniform and revealed, higher levels
    drawn uniform and marginalized by the exact LLR."""

    def __init__(self, channel: MultilevelChannel, level: int):
        self.channel = channel
        self.level = level

    def __repr__(self):
        return f"level({self.level}/{self.channel.T}, sigma={self.channel.sigma:.6g})"

    @property
    def capacity_hint(self) -> Optional[float]:
        return None

    def llr_samples(self, rng: np.random.Generator, bits: np.ndarray) -> np.ndarray:
        bits = np.asarray(bits, dtype=np.uint8)
        L = bits.shape[0]
        T = self.channel.T
        levels = [rng.integers(0, 2, size=L, dtype=np.uint8) for _ in range(T)]
        levels[self.level - 1] = bits
        x = map_bits_to_symbols(levels, self.channel)
        y = x + rng.normal(0.0, self.channel.sigma, size=L)
        return level_llr(y, self.channel, self.level, levels[: self.level - 1])


def level_channel_sampler(channel: MultilevelChannel, level: int) -> _LevelChannelSampler:
    return _LevelChannelSampler(channel, level)


def _softplus(z: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, z)


@functools.lru_cache(maxsize=8)
def _hermgauss(nodes: int):
    x, w = np.polynomial.hermite.hermgauss(nodes)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def biawgn_capacity(sigma: float, nodes: int = _HERM_NODES) -> float:
    """Mutual information of the +-1-input Gaussian channel, in bits, via
    Gauss-Hermite quadrature. Monotone decreasing in sigma, in [0, 1]."""
    if not (np.isfinite(sigma) and sigma > 0):
        raise DomainError(f"sigma must be finite and positive, got {sigma}")
    x, w = _hermgauss(nodes)
    z = math.sqrt(2.0) * x  # z ~ N(0,1) weights w/sqrt(pi)
    L = 2.0 / sigma**2 + 2.0 * z / sigma  # LLR when +1 is sent
    val = np.dot(w, _softplus(-L)) / math.sqrt(math.pi) / math.log(2.0)
    return float(min(1.0, max(0.0, 1.0 - val)))


def invert_biawgn_capacity(target: float) -> float:
    """sigma with biawgn_capacity(sigma) = target, by bisection."""
    if not 0.0 < target < 1.0:
        raise DomainError(f"target capacity must be in (0,1), got {target}")
    lo, hi = 1e-3, 1e3  # capacity(lo) ~ 1, capacity(hi) ~ 0
    for _ in range(200):
        mid = math.sqrt(lo * hi)
        if biawgn_capacity(mid) > target:
            lo = mid
        else:
            hi = mid
    return math.sqrt(lo * hi)


def level_capacities(
    channel: MultilevelChannel, samples: int = 200_000, seed=0
) -> np.ndarray:
    """Per-level mutual information under multistage decoding (level t
    conditioned on levels < t), by seeded Monte Carlo. Values clipped to
    [0, 1]."""
    rng = _as_rng(seed)
    T = channel.T
    levels = [rng.integers(0, 2, size=samples, dtype=np.uint8) for _ in range(T)]
    x = map_bits_to_symbols(levels, channel)
    y = x + rng.normal(0.0, channel.sigma, size=samples)
    caps = np.empty(T)
    ln2 = math.log(2.0)
    for t in range(1, T + 1):
        L = level_llr(y, channel, t, levels[: t - 1])
        signed = (1.0 - 2.0 * levels[t - 1].astype(np.float64)) * L
        caps[t - 1] = 1.0 - float(np.mean(_softplus(-signed))) / ln2
    return np.clip(caps, 0.0, 1.0)


def symbol_mi_mc(channel: MultilevelChannel, samples: int = 200_000, seed=0) -> float:
    """Symbol-wise mutual information I(X;Y) of the uniform 2^T-ASK input, by
    Monte Carlo (independent estimator used to cross-check the chain rule)."""
    rng = _as_rng(seed)
    labels = rng.integers(0, channel.M_points, size=samples)
    x = channel.points[labels]
    y = x + rng.normal(0.0, channel.sigma, size=samples)
    inv2s2 = 1.0 / (2.0 * channel.sigma**2)
    # log2 sum_x' exp(((y-x)^2 - (y-x')^2)/(2 sigma^2)), the -log2 posterior odds
    d = ((y[:, None] - x[:, None]) ** 2 - (y[:, None] - channel.points[None, :]) ** 2) * inv2s2
    lse = logsumexp(d, axis=1) / math.log(2.0)
    return float(channel.T - np.mean(lse))


def symbol_mi_quadrature(channel: MultilevelChannel, nodes: int = _HERM_NODES) -> float:
    """Deterministic symbol MI via Gauss-Hermite (used for capacity
    inversion when building degraded families)."""
    xg, wg = _hermgauss(nodes)
    z = math.sqrt(2.0) * xg
    total = 0.0
    inv2s2 = 1.0 / (2.0 * channel.sigma**2)
    for x in channel.points:
        y = x + channel.sigma * z  # (nodes,)
        d = ((y[:, None] - x) ** 2 - (y[:, None] - channel.points[None, :]) ** 2) * inv2s2
        lse = logsumexp(d, axis=1) / math.log(2.0)
        total += np.dot(wg, lse) / math.sqrt(math.pi)
    return float(channel.T - total / channel.M_points)


def level_capacity_quadrature(
    channel: MultilevelChannel, level: int, nodes: int = _HERM_NODES
) -> float:
    """Deterministic per-level mutual information I(B_t; Y | B_<t) in bits via
    Gauss-Hermite over each candidate point. Companion to the Monte-Carlo
    level_capacities; used where reproducible construction inputs matter."""
    if not 1 <= level <= channel.T:
        raise DomainError(f"level {level} out of range for T={channel.T}")
    pts = _level_candidates(channel, level)  # (n_low, 2, n_rest)
    n_low, _, n_rest = pts.shape
    xg, wg = _hermgauss(nodes)
    z = math.sqrt(2.0) * xg
    inv2s2 = 1.0 / (2.0 * channel.sigma**2)
    total = 0.0
    for v in range(n_low):
        same = pts[v]  # (2, n_rest), the points consistent with lower bits v
        flat = same.reshape(-1)
        for b in (0, 1):
            for x in same[b]:
                y = x + channel.sigma * z  # (nodes,)
                d_num = -((y[:, None] - same[b][None, :]) ** 2) * inv2s2
                d_den = -((y[:, None] - flat[None, :]) ** 2) * inv2s2
                num = logsumexp(d_num, axis=1) - math.log(n_rest)
                den = logsumexp(d_den, axis=1) - math.log(2 * n_rest)
                total += np.dot(wg, num - den) / math.sqrt(math.pi)
    total /= n_low * 2 * n_rest * math.log(2.0)
    return float(min(1.0, max(0.0, total)))


def invert_symbol_capacity(T: int, target: float) -> float:
    """sigma with symbol_mi_quadrature(2^T-ASK, sigma) = target."""
    if not 0.0 < target < T:
        raise DomainError(f"target {target} out of range (0, {T}) for T={T}")
    lo, hi = 1e-3, 1e3
    for _ in range(200):
        mid = math.sqrt(lo * hi)
        if symbol_mi_quadrature(MultilevelChannel(T, mid)) > target:
            lo = mid
        else:
            hi = mid
    return math.sqrt(lo * hi)


def fading_sample(process: FadingProcess, seed) -> float:
    """One Rayleigh-envelope power gain (unit mean), reproducible by seed."""
    return float(fading_gains(process, 1, seed)[0])


def fading_gains(process: FadingProcess, count: int, seed) -> np.ndarray:
    """count i.i.d. power gains |h|^2 with h ~ CN(0,1)."""
    rng = _as_rng(seed)
    a = rng.normal(0.0, 1.0, size=count)
    b = rng.normal(0.0, 1.0, size=count)
    return 0.5 * (a * a + b * b)

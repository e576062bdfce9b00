"""Incremental-redundancy HARQ over Rayleigh block fading.

The M_max possible transmissions of one session are the M parallel channels
of the staircase scheme: transmission m is a fading block with power gain g_m,
so its binary-input capacity is that of an AWGN channel at noise
sigma0/sqrt(g_m). The receiver accumulates transmissions until the decodable
depths cover all Q tiers, mirroring the stop rule "retransmit until the
realized rates sum past the target".

Margins: the scheme is built at sum rate r = (1-margin)*R, so a session that
the capacity oracle at rate (1-margin)*R declares decodable also clears the
depth requirement up to integer rounding. Depth selection does not use the
plain floor rule here. The floors cap the depths, and within the caps a
depth q is admitted on a channel only if the construction-time reliability
estimate of the depth-q sub-code at that channel's noise level stays under
policy.subcode_bler_budget: a fading block at capacity 0.15 clears the
floor test for one or two tiers, but no length-1024 code decodes anything
useful there, and feeding it tiers just corrupts the session. Among
admissible depth vectors with full GF(2) prefix rank the search maximizes
the smallest capacity-over-threshold ratio. The rank restriction matters
for M_max >= 4, where no binary matrix family satisfies the prefix-rank
property in full and the fourth matrix is a best-effort extension; see
scheduling.make_ordering.
"""

import math
import warnings
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import erfc

from .. import gf2
from ..channels import (
    FadingProcess,
    biawgn_capacity,
    fading_gains,
    invert_biawgn_capacity,
)
from ..codec import (
    ParallelConfig,
    depths_from_capacities,
    joint_decode,
    make_parallel_config,
    super_encode,
    transmit,
)
from ..construction import ga_reliability
from ..errors import ConfigurationError, DomainError
from ..scheduling import OrderingScheme, make_ordering

__all__ = [
    "HarqPolicy",
    "HarqResult",
    "median_oneshot_capacity",
    "harq_oracle",
    "depth_capacity_floors",
    "make_harq_context",
    "harq_run",
]


@dataclass(frozen=True)
class HarqPolicy:
    """Target rate R (bits per channel use), transmission budget, margin, and
    the code shape. sigma0 is the noise deviation at unit gain; horizon is
    the number of message blocks per session."""

    rate: float
    max_transmissions: int
    margin: float = 0.2
    N: int = 1024
    Q: int = 8
    T: int = 1
    sigma0: float = 0.466
    horizon: int = 4
    subcode_bler_budget: float = 3e-3

    def __post_init__(self):
        if not (np.isfinite(self.rate) and self.rate > 0):
            raise DomainError("rate must be positive")
        if self.max_transmissions < 1:
            raise DomainError("need at least one transmission")
        if not 0.0 <= self.margin < 1.0:
            raise DomainError("margin must be in [0, 1)")
        if self.T != 1:
            raise DomainError("the fading path uses binary signaling (T=1)")
        if not 0.0 < self.subcode_bler_budget < 1.0:
            raise DomainError("subcode_bler_budget must be in (0, 1)")

    @property
    def scheme_rate(self) -> float:
        return (1.0 - self.margin) * self.rate


def median_oneshot_capacity(sigma0: float) -> float:
    """Capacity of one transmission at the median Rayleigh power gain ln 2
    (unit-mean exponential gains)."""
    return biawgn_capacity(sigma0 / math.sqrt(math.log(2.0)))


def harq_oracle(rate: float, capacities: Sequence[float]) -> Tuple[bool, int]:
    """Smallest m with c_1+...+c_m >= rate, as (success, transmissions).
    Failure reports the full sequence length. Boundary equality counts as
    success (within 1e-12)."""
    if any(c < 0 for c in capacities):
        raise DomainError("capacities must be nonnegative")
    total = 0.0
    for m, c in enumerate(capacities, start=1):
        total += float(c)
        if total >= rate - 1e-12:
            return True, m
    return False, len(capacities)


def make_harq_context(policy: HarqPolicy) -> Tuple[ParallelConfig, OrderingScheme]:
    """Build the scheme and code once per policy; sessions only redraw
    gains, messages, and noise. M_max >= 4 takes the best-effort matrix
    extension (no full binary family exists)."""
    M = policy.max_transmissions
    if policy.scheme_rate > M:  # binary levels carry at most 1 bit/use each
        warnings.warn(
            f"target rate {policy.rate} cannot be reached within "
            f"{M} transmissions even at infinite SNR",
            stacklevel=2,
        )
    scheme = make_ordering(M, policy.Q, best_effort=(M >= 4))
    config = make_parallel_config(
        M=M,
        Q=policy.Q,
        N=policy.N,
        sum_rate=policy.scheme_rate,
        T=policy.T,
    )
    depth_capacity_floors(config, policy.subcode_bler_budget)  # warm the cache
    return config, scheme


def _solvable(scheme: OrderingScheme, depths: Sequence[int]) -> bool:
    rows = []
    for i, q in enumerate(depths, start=1):
        rows.extend(scheme.row_masks(i)[:q])
    return gf2.gf2_rank(rows) == scheme.Q


# capacity grid for the sub-code reliability tables; thresholds live well
# inside (0.05, 0.99) for any sensible policy
_FLOOR_GRID = np.linspace(0.02, 0.995, 40)


def depth_capacity_floors(config: ParallelConfig, p_max: float) -> List[float]:
    """Per-depth minimum channel capacity for reliable sub-code decoding.

    For each depth q, the union bound over the depth-q tier positions of the
    per-bit Gaussian-approximation error is evaluated on a capacity grid,
    and the floor is the smallest grid capacity where the bound drops under
    p_max (inf if it never does). Cached on config.descriptor, keyed by
    p_max. T=1 only.
    """
    if config.T != 1:
        raise DomainError("reliability floors are computed for T=1 schemes")
    cache = config.descriptor.setdefault("depth_capacity_floors", {})
    key = float(p_max)
    if key in cache:
        return cache[key]
    n = int(math.log2(config.N))
    plan = config.tier_plans[0]
    bounds = np.zeros((len(_FLOOR_GRID), config.Q))
    for gi, cap in enumerate(_FLOOR_GRID):
        sigma = invert_biawgn_capacity(float(cap))
        metrics = np.asarray(ga_reliability(2.0 / sigma**2, n).metrics)
        perr = 0.5 * erfc(np.sqrt(np.maximum(metrics, 0.0) / 2.0) / math.sqrt(2.0))
        for q in range(1, config.Q + 1):
            bounds[gi, q - 1] = perr[plan.cumulative(q)].sum()
    floors = []
    for q in range(config.Q):
        ok = np.flatnonzero(bounds[:, q] <= p_max)
        floors.append(float(_FLOOR_GRID[ok[0]]) if ok.size else math.inf)
    cache[key] = floors
    return floors


def _best_depths(
    capacities: Sequence[float],
    sum_rate: float,
    scheme: OrderingScheme,
    capacity_floors: Optional[Sequence[float]] = None,
) -> Optional[Tuple[int, ...]]:
    """Depth vector summing to Q with full prefix rank, where each channel's
    depth stays within its rate floor and (when capacity_floors is given)
    within the largest depth whose sub-code is predicted reliable at that
    channel's capacity. Maximizes the smallest capacity-over-requirement
    ratio; None when no admissible vector covers Q."""
    Q = scheme.Q
    caps = [float(c) for c in capacities]
    floors = depths_from_capacities(caps, sum_rate, Q)
    if capacity_floors is not None:
        for i, c in enumerate(caps):
            q = floors[i]
            while q > 0 and c < capacity_floors[q - 1]:
                q -= 1
            floors[i] = q
    if sum(floors) < Q:
        return None

    best: Optional[Tuple[int, ...]] = None
    best_margin = -1.0

    def margin_of(qs) -> float:
        m = math.inf
        for c, q in zip(caps, qs):
            if q > 0:
                need = q * sum_rate / Q
                if capacity_floors is not None:
                    need = max(need, capacity_floors[q - 1])
                m = min(m, c / need)
        return 0.0 if m is math.inf else m

    def rec(i: int, remaining: int, prefix):
        nonlocal best, best_margin
        if i == len(floors) - 1:
            if remaining <= floors[i]:
                qs = prefix + (remaining,)
                if _solvable(scheme, qs):
                    m = margin_of(qs)
                    if m > best_margin + 1e-15:
                        best, best_margin = qs, m
            return
        lo = max(0, remaining - sum(floors[i + 1 :]))
        for q in range(min(floors[i], remaining), lo - 1, -1):
            rec(i + 1, remaining - q, prefix + (q,))

    rec(0, Q, ())
    return best


@dataclass(frozen=True)
class HarqResult:
    """One session: transmissions actually used, whether the message stream
    came back intact, the realized per-transmission capacities, and the
    session throughput R*success/transmissions."""

    transmissions: int
    success: bool
    realized_capacities: Tuple[float, ...]
    throughput: float
    depths: Tuple[int, ...] = ()


def harq_run(
    policy: HarqPolicy,
    fading: FadingProcess,
    seed,
    config: Optional[ParallelConfig] = None,
    scheme: Optional[OrderingScheme] = None,
) -> HarqResult:
    """One HARQ session.

    Draws M_max block gains, encodes `horizon` blocks at the margined scheme
    rate, and attempts a joint decode after each transmission as soon as the
    rank-feasible depth search covers all Q tiers. Success is evaluated
    against the true messages (the scheme carries no error detection), and
    failure at the final transmission ends the session.
    """
    if config is None or scheme is None:
        config, scheme = make_harq_context(policy)
    if config.M != policy.max_transmissions or scheme.Q != policy.Q:
        raise ConfigurationError("context does not match the policy")

    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    s_gain, s_msg, s_noise = ss.spawn(3)
    gains = fading_gains(fading, policy.max_transmissions, np.random.default_rng(s_gain))
    sigmas = [policy.sigma0 / math.sqrt(g) if g > 0 else math.inf for g in gains]
    capacities = [biawgn_capacity(s) if np.isfinite(s) else 0.0 for s in sigmas]

    rng_msg = np.random.default_rng(s_msg)
    messages = rng_msg.integers(0, 2, size=(policy.horizon, config.K), dtype=np.uint8)
    frames = super_encode(messages, config, scheme)
    observations = transmit(frames, sigmas, s_noise)

    used = policy.max_transmissions
    success = False
    cap_floors = depth_capacity_floors(config, policy.subcode_bler_budget)
    depths_used: Tuple[int, ...] = tuple([0] * policy.max_transmissions)
    for m in range(1, policy.max_transmissions + 1):
        caps_m = capacities[:m] + [0.0] * (policy.max_transmissions - m)
        depths = _best_depths(caps_m, config.sum_rate, scheme, cap_floors)
        if depths is None:
            continue
        result = joint_decode(
            observations,
            sigmas,
            caps_m,
            config,
            scheme,
            horizon=policy.horizon,
            depths=depths,
        )
        used = m
        depths_used = tuple(depths)
        if bool(result.solved.all()) and np.array_equal(result.messages, messages):
            success = True
            break

    throughput = policy.rate * (1.0 if success else 0.0) / used
    return HarqResult(
        transmissions=used,
        success=success,
        realized_capacities=tuple(capacities),
        throughput=throughput,
        depths=depths_used,
    )

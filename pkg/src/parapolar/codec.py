"""Super encoder and joint successive decoder over M parallel channels.

One message block carries K bits, split into Q sub-blocks of K/Q. Each channel
applies its combining matrix (scheduling.combine_subblocks), places tier q of
block b in slot b+q-1 (staircase), splits each tier payload level-major across
the T level codes by the rate-table increments, and polar-encodes every level.
The decoder walks (slot, channel) tasks: a task can run once every tier deeper
than the channel's decodable depth references an already-decoded or structural
block; those tiers enter the SC decoders as known bits, the fresh tiers are
decoded and appended as GF(2) rows to their blocks' systems, and a block is
recovered the moment its rows reach rank Q.

The decoder cancels opportunistically: any tier whose block is already
decoded is treated as known even when its index is within the fresh depth.
That keeps the effective code rate of late slots at the level the depth rule
promises when the realized depths overshoot (sum above Q).

Rates, capacities and noise deviations in this module are all per real
dimension. A complex channel carries one ASK stream per real/imaginary
component, so its per-complex-use rates are twice the figures handled here.
"""

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from . import gf2
from .channels import (
    MultilevelChannel,
    biawgn_capacity,
    invert_biawgn_capacity,
    invert_symbol_capacity,
    level_capacity_quadrature,
    level_channel_sampler,
    level_llr,
    map_bits_to_symbols,
)
from .construction import (
    DegradedFamily,
    NestedTierPlan,
    ReliabilityProfile,
    build_nested_tiers,
    ga_reliability,
    mc_reliability,
)
from .errors import (
    ConfigurationError,
    ConstructionError,
    DomainError,
    InfeasibleRateError,
    PipelineOrderError,
)
from .polar import CodeConfig, polar_encode, sc_decode
from .scheduling import OrderingScheme, TierPayload, staircase_assign

__all__ = [
    "RateTable",
    "allocate_rates",
    "biawgn_family",
    "ParallelConfig",
    "make_parallel_config",
    "EncodedFrame",
    "super_encode",
    "transmit",
    "channel_decode_prefix",
    "JointDecodeResult",
    "DecoderState",
    "joint_decode",
    "depths_from_capacities",
    "balance_depths",
    "frames_to_hex",
]

_CAP_EPS = 1e-9  # slack for feasibility and depth-floor boundary comparisons


@dataclass(frozen=True)
class RateTable:
    """Cumulative information bit counts per depth and level.

    counts[q, t-1] is the number of information bits of level t decodable at
    depth q; row 0 is all zeros, rows sum to q*K/Q, and columns never
    decrease. Rates are counts/N.
    """

    N: int
    Q: int
    T: int
    counts: np.ndarray

    def __post_init__(self):
        c = np.ascontiguousarray(self.counts, dtype=np.int64)
        if c.shape != (self.Q + 1, self.T):
            raise DomainError(f"counts must be ({self.Q + 1}, {self.T})")
        if np.any(c[0] != 0):
            raise DomainError("depth-0 row must be zero")
        if np.any(np.diff(c, axis=0) < 0):
            raise DomainError("counts must be nondecreasing in depth")
        if np.any(c > self.N):
            raise DomainError("a level cannot carry more than N bits")
        K = int(c[self.Q].sum())
        rowsums = c.sum(axis=1)
        expect = np.arange(self.Q + 1, dtype=np.int64) * (K // self.Q)
        if K % self.Q or np.any(rowsums != expect):
            raise DomainError("row sums must equal q*K/Q with K divisible by Q")
        object.__setattr__(self, "counts", c)

    @property
    def K(self) -> int:
        return int(self.counts[self.Q].sum())

    @property
    def rates(self) -> np.ndarray:
        return self.counts / self.N

    def increments(self, q: int) -> np.ndarray:
        """Per-level bit counts added by tier q (length T)."""
        if not 1 <= q <= self.Q:
            raise DomainError(f"tier {q} outside 1..{self.Q}")
        return (self.counts[q] - self.counts[q - 1]).copy()


def _largest_remainder(budget: int, weights: np.ndarray, cap: int) -> np.ndarray:
    """Integer split of budget proportional to weights, each part <= cap.
    Remainder ties go to the lower index."""
    w = np.clip(np.asarray(weights, dtype=np.float64), 0.0, None)
    T = w.shape[0]
    if budget > cap * T:
        raise InfeasibleRateError(f"budget {budget} exceeds {T} levels at cap {cap}")
    out = np.zeros(T, dtype=np.int64)
    # clamp saturated levels first, re-splitting the rest proportionally
    active = np.ones(T, dtype=bool)
    rem_budget = budget
    while True:
        ws = w[active].sum()
        if ws <= 0.0:
            # no usable weight left: spread evenly over active slots
            quota = np.full(int(active.sum()), rem_budget / max(1, active.sum()))
        else:
            quota = rem_budget * w[active] / ws
        over = quota > cap + 1e-12
        if not np.any(over):
            break
        idx = np.flatnonzero(active)[over]
        out[idx] = cap
        rem_budget -= cap * idx.shape[0]
        active[idx] = False
        if not np.any(active):
            if rem_budget != 0:
                raise InfeasibleRateError("budget does not fit under the level caps")
            return out
    base = np.floor(quota).astype(np.int64)
    short = rem_budget - int(base.sum())
    frac = quota - base
    order = np.lexsort((np.arange(frac.shape[0]), -frac))
    base[order[:short]] += 1
    out[np.flatnonzero(active)] = base
    return out


def allocate_rates(
    sum_rate: float, Q: int, level_caps: np.ndarray, N: int
) -> RateTable:
    """Split the depth budgets q*r/Q across levels proportionally to the
    per-depth level capacities.

    level_caps: (Q, T), row q-1 holding each level's capacity at the depth-q
    design channel, bits per real dimension. The total per block is
    K = Q*floor(N*r/Q); depth q gets exactly q*K/Q bits, distributed by
    largest remainder (ties toward lower levels) and then repaired so no
    level's count ever decreases with depth.
    """
    caps = np.ascontiguousarray(level_caps, dtype=np.float64)
    if caps.ndim != 2 or caps.shape[0] != Q:
        raise DomainError(f"level_caps must be (Q, T) with Q={Q}")
    if not (np.isfinite(sum_rate) and sum_rate > 0):
        raise DomainError(f"sum_rate must be positive and finite, got {sum_rate}")
    T = caps.shape[1]
    K = Q * int(math.floor(N * sum_rate / Q + _CAP_EPS))
    if K < Q:
        raise InfeasibleRateError(
            f"sum rate {sum_rate} leaves no information bits at N={N}, Q={Q}"
        )
    counts = np.zeros((Q + 1, T), dtype=np.int64)
    for q in range(1, Q + 1):
        budget = q * K // Q
        headroom = math.floor(N * float(caps[q - 1].sum()) + _CAP_EPS)
        if budget > headroom:
            raise InfeasibleRateError(
                f"depth {q} needs {budget} bits but the level capacities "
                f"support only {headroom} at N={N}"
            )
        row = _largest_remainder(budget, caps[q - 1], N)
        # monotone repair: pull any shortfall vs the previous depth from the
        # levels that grew the most
        prev = counts[q - 1]
        deficit = np.maximum(prev - row, 0)
        need = int(deficit.sum())
        if need:
            row = row + deficit
            surplus = row - prev  # > 0 where donors exist, after topping up
            donors = np.flatnonzero(surplus > 0)
            order = donors[np.lexsort((donors, -surplus[donors]))]
            for t in order:
                if need == 0:
                    break
                give = min(need, int(surplus[t]))
                row[t] -= give
                need -= give
            if need:
                raise InfeasibleRateError(f"cannot keep levels monotone at depth {q}")
        counts[q] = row
    return RateTable(N=N, Q=Q, T=T, counts=counts)


def _ga_profile_for_capacity(cap: float, n: int) -> ReliabilityProfile:
    """GA reliability of the binary-input AWGN channel whose capacity matches
    cap (clamped away from 0 and 1 for the inversion)."""
    c = min(max(cap, 1e-6), 1.0 - 1e-9)
    sigma = invert_biawgn_capacity(c)
    return ga_reliability(2.0 / sigma**2, n)


def biawgn_family(
    Q: int,
    N: int,
    sum_rate: float,
    construction: str = "ga",
    mc_trials: int = 4000,
    seed: int = 0,
) -> DegradedFamily:
    """Degraded BIAWGN family for the single-level path (T=1).

    Channel m has capacity m*r/Q (noise chosen by inverting the capacity
    curve) and information set size floor(N*m*r/Q).
    """
    if not 0 < sum_rate < 1:
        raise DomainError(f"per-dimension sum rate must be in (0,1), got {sum_rate}")
    n = int(math.log2(N))
    if 2**n != N:
        raise DomainError(f"N={N} is not a power of two")
    caps = np.array([m * sum_rate / Q for m in range(1, Q + 1)])
    profiles = []
    for m in range(1, Q + 1):
        sigma = invert_biawgn_capacity(caps[m - 1])
        if construction == "ga":
            profiles.append(ga_reliability(2.0 / sigma**2, n))
        elif construction == "mc":
            from .channels import BiAwgnChannel

            profiles.append(mc_reliability(BiAwgnChannel(sigma), n, mc_trials, seed + m))
        else:
            raise DomainError(f"unknown construction {construction!r}")
    info_sizes = [int(math.floor(N * c + _CAP_EPS)) for c in caps]
    return DegradedFamily(Q=Q, capacities=caps, profiles=profiles, info_sizes=info_sizes)


@dataclass(frozen=True)
class ParallelConfig:
    """Everything the encoder and decoder share.

    tier_plans holds one NestedTierPlan per level; level t's code freezes all
    positions outside its plan's full-depth union. design_sigmas is the
    worst-to-best noise grid the construction targeted (depth q designed at
    symbol mutual information q*r/Q).
    """

    M: int
    Q: int
    T: int
    N: int
    sum_rate: float
    rate_table: RateTable
    tier_plans: Tuple[NestedTierPlan, ...]
    design_sigmas: Tuple[float, ...]
    descriptor: Dict = field(default_factory=dict)

    def __post_init__(self):
        if self.M < 1:
            raise DomainError("M must be >= 1")
        if len(self.tier_plans) != self.T:
            raise DomainError("need one tier plan per level")
        if len(self.design_sigmas) != self.Q:
            raise DomainError("need one design sigma per depth")
        rt = self.rate_table
        if (rt.N, rt.Q, rt.T) != (self.N, self.Q, self.T):
            raise DomainError("rate table shape disagrees with the config")
        for t, plan in enumerate(self.tier_plans, start=1):
            if plan.Q != self.Q:
                raise DomainError(f"plan for level {t} has Q={plan.Q}")
            if any(
                plan.sizes[q - 1] != int(rt.counts[q, t - 1] - rt.counts[q - 1, t - 1])
                for q in range(1, self.Q + 1)
            ):
                raise ConfigurationError(
                    f"level {t} tier sizes disagree with the rate table"
                )
        codes = []
        for plan in self.tier_plans:
            mask = np.ones(self.N, dtype=np.uint8)
            mask[plan.cumulative(self.Q)] = 0
            codes.append(
                CodeConfig(
                    n=int(math.log2(self.N)),
                    frozen_mask=mask,
                    frozen_values=np.zeros(int(mask.sum()), dtype=np.uint8),
                )
            )
        object.__setattr__(self, "_level_codes", tuple(codes))
        object.__setattr__(self, "_mapper", MultilevelChannel(self.T, 1.0))

    @property
    def K(self) -> int:
        return self.rate_table.K

    @property
    def subblock_len(self) -> int:
        return self.K // self.Q

    @property
    def level_codes(self) -> Tuple[CodeConfig, ...]:
        return self._level_codes

    @property
    def mapper(self) -> MultilevelChannel:
        return self._mapper

    def tier_positions(self, level: int, tier: int) -> np.ndarray:
        """Ascending u-domain positions of one tier of one level code."""
        return self.tier_plans[level - 1].tiers[tier - 1]

    def payload_layout(self, tier: int) -> List[Tuple[int, int, int]]:
        """(level, start, stop) slices of a tier payload, level-major."""
        inc = self.rate_table.increments(tier)
        out = []
        off = 0
        for t in range(1, self.T + 1):
            out.append((t, off, off + int(inc[t - 1])))
            off += int(inc[t - 1])
        return out


def make_parallel_config(
    M: int,
    Q: int,
    N: int,
    sum_rate: float,
    T: Optional[int] = None,
    construction: str = "ga",
    mc_trials: int = 4000,
    seed: int = 0,
    design_margin: float = 0.15,
) -> ParallelConfig:
    """Design the scheme for a per-dimension sum rate.

    Depth q targets the noise level where the T-level symbol carries
    q*r/Q / (1 - design_margin) bits per dimension: the family is built
    slightly above the nominal rate so that each tier's candidate pool is
    larger than the tier itself and the greedy can skip positions that only
    look acceptable at the zero-margin design point. At finite N a pool
    sized exactly to capacity necessarily bottoms out in coin-flip
    positions, and those stay bad at the realized noise level. Level
    capacities at the margined points drive the rate table; per-level
    reliability profiles come from a capacity-matched binary-input AWGN
    Gaussian approximation ("ga", default) or from seeded Monte Carlo on
    the exact level channel ("mc"). If the per-depth profiles refuse to
    nest, the level falls back to a single shared profile (the best design
    point), which nests by construction; the fallback is recorded in the
    descriptor under "shared_profile_levels".
    """
    if T is None:
        T = max(1, math.ceil(sum_rate))
    if sum_rate >= T:
        raise InfeasibleRateError(
            f"sum rate {sum_rate} per dimension needs more than {T} levels"
        )
    if construction not in ("ga", "mc"):
        raise DomainError(f"unknown construction {construction!r}")
    if not 0.0 <= design_margin < 1.0:
        raise DomainError("design_margin must be in [0, 1)")
    n = int(math.log2(N))
    if 2**n != N:
        raise DomainError(f"N={N} is not a power of two")

    sigmas = []
    caps = np.zeros((Q, T))
    for q in range(1, Q + 1):
        # margined design target, clamped below symbol saturation
        target = min(q * sum_rate / (Q * (1.0 - design_margin)), T * (1.0 - 1e-3))
        if T == 1:
            sigma = invert_biawgn_capacity(target)
            caps[q - 1, 0] = biawgn_capacity(sigma)
        else:
            sigma = invert_symbol_capacity(T, target)
            ch = MultilevelChannel(T, sigma)
            for t in range(1, T + 1):
                caps[q - 1, t - 1] = level_capacity_quadrature(ch, t)
        sigmas.append(sigma)

    table = allocate_rates(sum_rate, Q, caps, N)

    shared_fallback = []
    plans = []
    for t in range(1, T + 1):
        col = table.counts[1:, t - 1]
        sizes = np.diff(table.counts[:, t - 1]).astype(int).tolist()
        pools = [
            min(N, max(int(math.floor(N * caps[q - 1, t - 1] + _CAP_EPS)), int(col[q - 1])))
            for q in range(1, Q + 1)
        ]

        def _profiles(shared: bool) -> List[ReliabilityProfile]:
            if shared:
                best = _level_profile(
                    T, sigmas[-1], t, caps[-1, t - 1], n, construction, mc_trials, seed
                )
                return [best] * Q
            return [
                _level_profile(
                    T,
                    sigmas[q - 1],
                    t,
                    caps[q - 1, t - 1],
                    n,
                    construction,
                    mc_trials,
                    seed + q,
                )
                for q in range(1, Q + 1)
            ]

        def _family(profiles: List[ReliabilityProfile]) -> DegradedFamily:
            return DegradedFamily(
                Q=Q,
                capacities=caps[:, t - 1],
                profiles=profiles,
                info_sizes=pools,
            )

        try:
            plans.append(build_nested_tiers(_family(_profiles(False)), 0, tier_sizes=sizes))
        except ConstructionError:
            plans.append(build_nested_tiers(_family(_profiles(True)), 0, tier_sizes=sizes))
            shared_fallback.append(t)

    descriptor = {
        "construction": construction,
        "level_capacities": caps.tolist(),
        "design_margin": design_margin,
        "shared_profile_levels": shared_fallback,
    }
    return ParallelConfig(
        M=M,
        Q=Q,
        T=T,
        N=N,
        sum_rate=sum_rate,
        rate_table=table,
        tier_plans=tuple(plans),
        design_sigmas=tuple(sigmas),
        descriptor=descriptor,
    )


def _level_profile(
    T: int,
    sigma: float,
    level: int,
    cap: float,
    n: int,
    construction: str,
    mc_trials: int,
    seed: int,
) -> ReliabilityProfile:
    """Reliability profile of one level at one design noise point.

    "ga": Gaussian approximation on the binary-input AWGN channel whose
    capacity matches the level capacity (exact for T=1, a surrogate above).
    "mc": genie-aided Monte Carlo on the exact level channel.
    """
    if construction == "ga":
        if T == 1:
            return ga_reliability(2.0 / sigma**2, n)
        return _ga_profile_for_capacity(cap, n)
    if T == 1:
        from .channels import BiAwgnChannel

        return mc_reliability(BiAwgnChannel(sigma), n, mc_trials, seed)
    return mc_reliability(
        level_channel_sampler(MultilevelChannel(T, sigma), level), n, mc_trials, seed
    )


@dataclass(frozen=True)
class EncodedFrame:
    """One channel/slot output: T level codewords and the mapped symbols."""

    channel: int
    slot: int
    codewords: np.ndarray  # (T, N) uint8
    symbols: np.ndarray  # (N,) float64


def _subblocks(block_bits: np.ndarray, Q: int) -> np.ndarray:
    L = block_bits.shape[0] // Q
    return block_bits.reshape(Q, L)


def _combined_payload(
    scheme: OrderingScheme,
    channel: int,
    tier: int,
    subblocks: np.ndarray,
) -> np.ndarray:
    """GF(2) combination for (channel, tier) of one block's sub-blocks."""
    A = scheme.matrices[channel - 1]
    out = np.zeros(subblocks.shape[1], dtype=np.uint8)
    for k in np.flatnonzero(A[tier - 1]):
        out ^= subblocks[k]
    return out


def super_encode(
    message_blocks: np.ndarray,
    config: ParallelConfig,
    scheme: OrderingScheme,
) -> List[List[EncodedFrame]]:
    """Encode a stream of blocks into per-channel frames.

    message_blocks: (B, K) bits. Returns frames[i-1][s-1] for channel i and
    slot s over the horizon+Q-1 slots; structurally empty tiers are zero.
    """
    msgs = np.ascontiguousarray(message_blocks, dtype=np.uint8) & 1
    if msgs.ndim != 2 or msgs.shape[1] != config.K:
        raise ConfigurationError(
            f"message blocks must be (B, {config.K}), got {msgs.shape}"
        )
    if scheme.Q != config.Q or scheme.M < config.M:
        raise ConfigurationError("scheme does not match the config")
    B = msgs.shape[0]
    assign = staircase_assign(config.Q, B)
    subs = [_subblocks(msgs[b], config.Q) for b in range(B)]
    L = config.subblock_len

    frames: List[List[EncodedFrame]] = []
    for i in range(1, config.M + 1):
        row: List[EncodedFrame] = []
        for s in range(1, assign.num_slots + 1):
            us = [np.zeros(config.N, dtype=np.uint8) for _ in range(config.T)]
            for q in range(1, config.Q + 1):
                b = assign.block_at(s, q)
                payload = (
                    np.zeros(L, dtype=np.uint8)
                    if b is None
                    else _combined_payload(scheme, i, q, subs[b - 1])
                )
                for t, lo, hi in config.payload_layout(q):
                    if hi > lo:
                        us[t - 1][config.tier_positions(t, q)] = payload[lo:hi]
            xs = np.stack([polar_encode(u) for u in us])
            sym = map_bits_to_symbols(list(xs), config.mapper)
            row.append(EncodedFrame(channel=i, slot=s, codewords=xs, symbols=sym))
        frames.append(row)
    return frames


def transmit(
    frames: List[List[EncodedFrame]], sigmas: Sequence[float], seed
) -> List[List[np.ndarray]]:
    """Per-channel AWGN observations of every slot, seeded reproducibly
    (channel-major spawn order)."""
    if len(sigmas) != len(frames):
        raise DomainError("need one noise deviation per channel")
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    children = ss.spawn(len(frames) * len(frames[0]))
    out = []
    for i, row in enumerate(frames):
        obs_row = []
        for s, frame in enumerate(row):
            rng = np.random.default_rng(children[i * len(row) + s])
            y = frame.symbols + rng.normal(0.0, float(sigmas[i]), size=frame.symbols.shape)
            obs_row.append(y)
        out.append(obs_row)
    return out


def _decode_one_slot(
    y: np.ndarray,
    sigma: float,
    config: ParallelConfig,
    known_per_level: List[Dict[int, int]],
    rule: str,
) -> Tuple[List[np.ndarray], np.ndarray]:
    """Multistage SC decode of one slot: levels in order, each conditioned on
    the re-encoded codewords of the levels below. Returns (per-level u
    estimates, (T, N) codeword matrix)."""
    ch = MultilevelChannel(config.T, float(sigma))
    us: List[np.ndarray] = []
    xs: List[np.ndarray] = []
    for t in range(1, config.T + 1):
        llr = level_llr(y, ch, t, xs)
        u_t = sc_decode(llr, config.level_codes[t - 1], known=known_per_level[t - 1], rule=rule)
        us.append(u_t)
        xs.append(polar_encode(u_t))
    return us, np.stack(xs)


def _known_entries_for_tier(
    config: ParallelConfig, tier: int, payload: np.ndarray
) -> List[Tuple[int, Dict[int, int]]]:
    """Per-level {position: bit} entries pinning one tier to a known payload."""
    out = []
    for t, lo, hi in config.payload_layout(tier):
        entries = {}
        if hi > lo:
            pos = config.tier_positions(t, tier)
            seg = payload[lo:hi]
            entries = {int(p): int(v) for p, v in zip(pos, seg)}
        out.append((t, entries))
    return out


def _extract_tier_payload(
    config: ParallelConfig, us: List[np.ndarray], tier: int
) -> np.ndarray:
    payload = np.zeros(config.subblock_len, dtype=np.uint8)
    for t, lo, hi in config.payload_layout(tier):
        if hi > lo:
            payload[lo:hi] = us[t - 1][config.tier_positions(t, tier)]
    return payload


def depths_from_capacities(
    capacities: Sequence[float], sum_rate: float, Q: int
) -> List[int]:
    """q_i = floor(capacity_i * Q / r), clamped to [0, Q]."""
    if sum_rate <= 0:
        raise DomainError("sum rate must be positive")
    out = []
    for c in capacities:
        if c < 0 or not np.isfinite(c):
            raise DomainError(f"capacity {c} must be finite and nonnegative")
        out.append(int(min(Q, math.floor(c * Q / sum_rate + _CAP_EPS))))
    return out


def balance_depths(
    capacities: Sequence[float], sum_rate: float, Q: int
) -> List[int]:
    """Depth vector summing to exactly Q that maximizes the smallest
    per-channel capacity margin, never exceeding the floor rule's depths.

    Starting from the floor depths, surplus is burned by repeatedly
    decrementing the channel whose margin capacity/(q*r/Q) is currently the
    thinnest (ties toward the lower channel index). When the floor depths sum
    below Q they are returned unchanged; the caller sees the outage."""
    qs = depths_from_capacities(capacities, sum_rate, Q)
    excess = sum(qs) - Q
    caps = [float(c) for c in capacities]
    while excess > 0:
        best = -1
        best_margin = math.inf
        for i, q in enumerate(qs):
            if q == 0:
                continue
            margin = caps[i] / (q * sum_rate / Q)
            if margin < best_margin - 1e-15:
                best = i
                best_margin = margin
        qs[best] -= 1
        excess -= 1
    return qs


@dataclass
class DecoderState:
    """Joint decoder bookkeeping: per-channel depths, per-block GF(2) systems,
    decoded blocks, and the per-channel frontier of completed slots."""

    depths: List[int]
    rows: Dict[int, List[int]] = field(default_factory=dict)
    payloads: Dict[int, List[np.ndarray]] = field(default_factory=dict)
    solved: Dict[int, np.ndarray] = field(default_factory=dict)
    done_tasks: set = field(default_factory=set)
    frontier: Dict[int, int] = field(default_factory=dict)


@dataclass(frozen=True)
class JointDecodeResult:
    messages: np.ndarray  # (B, K) uint8; zeros where a block failed
    solved: np.ndarray  # (B,) bool
    depths: Tuple[int, ...]
    outage: bool
    passes: int
    state: DecoderState


def _try_solve(state: DecoderState, b: int, Q: int, L: int) -> None:
    rows = state.rows.get(b)
    if not rows or b in state.solved:
        return
    if gf2.gf2_rank(rows) < Q:
        return
    ok, x = gf2.gf2_solve(rows, np.stack(state.payloads[b]), Q)
    if ok:
        state.solved[b] = x  # (Q, L) sub-blocks


def joint_decode(
    observations: Optional[List[List[np.ndarray]]],
    sigmas: Sequence[float],
    capacities: Sequence[float],
    config: ParallelConfig,
    scheme: OrderingScheme,
    horizon: int,
    depths: Optional[Sequence[int]] = None,
    rule: str = "exact",
    obs_provider: Optional[Callable[[int, int], Optional[np.ndarray]]] = None,
    on_task_done: Optional[Callable[[int, int, np.ndarray], None]] = None,
) -> JointDecodeResult:
    """Joint successive decode of the staircase stream.

    observations[i-1][s-1] is the slot-s output of channel i (or None with an
    obs_provider, which may return None to defer a slot until its own
    prerequisites are met, as interference cancellation pipelines need).
    Depths default to the floor rule on the realized capacities. A sum of
    depths below Q is a declared outage: the loop still runs, every block
    fails. on_task_done(channel, slot, codewords) fires after each fresh slot
    decode with the (T, N) re-encoded level codewords.
    """
    M, Q, L = config.M, config.Q, config.subblock_len
    if len(sigmas) != M or (observations is not None and len(observations) != M):
        raise DomainError(f"need sigmas/observations for all {M} channels")
    if depths is None:
        depths = depths_from_capacities(capacities, config.sum_rate, Q)
    depths = [int(q) for q in depths]
    if len(depths) != M or any(q < 0 or q > Q for q in depths):
        raise DomainError(f"depths must be M values in [0, {Q}]")
    outage = sum(depths) < Q
    assign = staircase_assign(Q, horizon)
    state = DecoderState(depths=list(depths))

    def tier_status(i: int, s: int):
        """Per tier: ('structural'|'known'|'fresh'|'blocked', block)."""
        out = []
        for q in range(1, Q + 1):
            b = assign.block_at(s, q)
            if b is None:
                out.append(("structural", None))
            elif b in state.solved:
                out.append(("known", b))
            elif q <= depths[i - 1]:
                out.append(("fresh", b))
            else:
                out.append(("blocked", b))
        return out

    tasks = [
        (s, i)
        for s in range(1, assign.num_slots + 1)
        for i in range(1, M + 1)
        if depths[i - 1] > 0
    ]
    passes = 0
    progress = True
    while progress:
        progress = False
        passes += 1
        for s, i in tasks:
            if (s, i) in state.done_tasks:
                continue
            status = tier_status(i, s)
            if any(kind == "blocked" for kind, _ in status):
                continue
            if obs_provider is not None:
                y = obs_provider(i, s)
                if y is None:
                    continue
            else:
                y = observations[i - 1][s - 1]

            known_per_level: List[Dict[int, int]] = [dict() for _ in range(config.T)]
            fresh: List[Tuple[int, int]] = []
            for q, (kind, b) in enumerate(status, start=1):
                if kind == "fresh":
                    fresh.append((q, b))
                    continue
                payload = (
                    np.zeros(L, dtype=np.uint8)
                    if kind == "structural"
                    else _combined_payload(scheme, i, q, state.solved[b])
                )
                for t, entries in _known_entries_for_tier(config, q, payload):
                    known_per_level[t - 1].update(entries)

            us, xs = _decode_one_slot(y, sigmas[i - 1], config, known_per_level, rule)
            A = scheme.matrices[i - 1]
            touched = set()
            for q, b in fresh:
                state.rows.setdefault(b, []).append(gf2.row_to_mask(A[q - 1]))
                state.payloads.setdefault(b, []).append(
                    _extract_tier_payload(config, us, q)
                )
                touched.add(b)
            for b in sorted(touched):
                _try_solve(state, b, Q, L)
            state.done_tasks.add((s, i))
            state.frontier[i] = max(state.frontier.get(i, 0), s)
            if on_task_done is not None:
                on_task_done(i, s, xs)
            progress = True

    messages = np.zeros((horizon, config.K), dtype=np.uint8)
    solved = np.zeros(horizon, dtype=bool)
    for b, x in state.solved.items():
        messages[b - 1] = x.reshape(-1)
        solved[b - 1] = True
    return JointDecodeResult(
        messages=messages,
        solved=solved,
        depths=tuple(depths),
        outage=outage,
        passes=passes,
        state=state,
    )


def channel_decode_prefix(
    observations: Sequence[np.ndarray],
    sigma: float,
    channel: int,
    depth: int,
    known_blocks: Mapping[int, np.ndarray],
    config: ParallelConfig,
    scheme: OrderingScheme,
    horizon: int,
    rule: str = "exact",
) -> List[TierPayload]:
    """Single-channel prefix decode at a fixed depth.

    Every tier deeper than `depth` must reference a structurally empty block
    or one present in known_blocks (full K-bit messages); otherwise the
    cancellation chain is broken and a PipelineOrderError names the first
    missing block. Emits the payloads of tiers 1..depth for every slot, in
    slot order.
    """
    if not 0 <= depth <= config.Q:
        raise DomainError(f"depth {depth} outside 0..{config.Q}")
    assign = staircase_assign(config.Q, horizon)
    if len(observations) != assign.num_slots:
        raise DomainError(f"need {assign.num_slots} slot observations")
    subs = {
        b: _subblocks(np.ascontiguousarray(blk, dtype=np.uint8) & 1, config.Q)
        for b, blk in known_blocks.items()
    }
    L = config.subblock_len
    out: List[TierPayload] = []
    if depth == 0:
        return out
    A = scheme.matrices[channel - 1]
    for s in range(1, assign.num_slots + 1):
        known_per_level: List[Dict[int, int]] = [dict() for _ in range(config.T)]
        fresh: List[int] = []
        for q in range(1, config.Q + 1):
            b = assign.block_at(s, q)
            if b is not None and q <= depth:
                fresh.append(q)
                continue
            if b is None:
                payload = np.zeros(L, dtype=np.uint8)
            elif b in subs:
                payload = _combined_payload(scheme, channel, q, subs[b])
            else:
                raise PipelineOrderError(
                    f"slot {s} tier {q} needs cancelled block {b}, "
                    f"which was not supplied"
                )
            for t, entries in _known_entries_for_tier(config, q, payload):
                known_per_level[t - 1].update(entries)
        us, _ = _decode_one_slot(
            np.asarray(observations[s - 1], dtype=np.float64),
            sigma,
            config,
            known_per_level,
            rule,
        )
        for q in fresh:
            out.append(
                TierPayload(
                    channel=channel,
                    tier=q,
                    bits=_extract_tier_payload(config, us, q),
                    row=A[q - 1].copy(),
                    block=assign.block_at(s, q),
                    slot=s,
                )
            )
    return out


def frames_to_hex(frames: List[List[EncodedFrame]]) -> str:
    """Debug dump of encoded frames as hex text.

    Per frame: a `frame channel=<i> slot=<s>` header, one `bits level=<t>`
    line per level with the codeword packed MSB-first into hex, and a
    `symbols` line of C99 hex floats. Round-trips exactly (floats via
    float.hex).
    """
    lines = []
    for per_channel in frames:
        for fr in per_channel:
            lines.append(f"frame channel={fr.channel} slot={fr.slot}")
            for t in range(fr.codewords.shape[0]):
                packed = np.packbits(fr.codewords[t]).tobytes().hex()
                lines.append(f"bits level={t + 1} {packed}")
            lines.append("symbols " + " ".join(float(v).hex() for v in fr.symbols))
    return "\n".join(lines) + "\n"

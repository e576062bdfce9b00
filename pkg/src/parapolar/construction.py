"""Reliability profiles, information sets, and nested tier plans.

Two construction methods populate per-index reliability metrics (higher is
better): a Gaussian-approximation recursion on LLR means for BIAWGN-like
channels, and Monte-Carlo genie-aided SC error counting for anything that can
only be sampled. Profiles feed info_set / build_nested_tiers, which produce
the rate-compatible tier partition: Q disjoint tiers whose unions stay inside
every degraded channel's information set.
"""

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from ._backend import kernels
from .errors import ConstructionError, DomainError

__all__ = [
    "ReliabilityProfile",
    "DegradedFamily",
    "NestedTierPlan",
    "ga_reliability",
    "mc_reliability",
    "info_set",
    "compute_K",
    "build_nested_tiers",
    "check_degradation",
]


# ---------------------------------------------------------------------------
# Gaussian approximation in the log-phi domain.
#
# phi(x) = 1 - E[tanh(L/2)] for L ~ N(x, 2x); the two-piece fit below is the
# usual one (power fit for x < 10, asymptotic sqrt(pi/x)(1-10/(7x))e^(-x/4)
# beyond). Everything is kept as ln(phi) so means of order 1e4 survive.
# ---------------------------------------------------------------------------


def _phi_log(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    small = x < 10.0
    xs = x[small]
    out[small] = np.minimum(-0.4527 * np.power(xs, 0.86) + 0.0218, 0.0)
    xl = x[~small]
    out[~small] = 0.5 * np.log(np.pi / xl) + np.log1p(-10.0 / (7.0 * xl)) - xl / 4.0
    return out


def _phi_inv_log(y: np.ndarray) -> np.ndarray:
    """Inverse of _phi_log by vectorized bisection (phi_log is decreasing)."""
    y = np.asarray(y, dtype=np.float64)
    lo = np.zeros_like(y)
    hi = np.maximum(20.0, -6.0 * y)
    for _ in range(70):
        mid = 0.5 * (lo + hi)
        go_right = _phi_log(mid) > y
        lo = np.where(go_right, mid, lo)
        hi = np.where(go_right, hi, mid)
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class ReliabilityProfile:
    """Per-index reliability metrics (length N, higher = more reliable) plus a
    descriptor of the source channel (kind, noise parameter, capacity...)."""

    metrics: np.ndarray
    descriptor: Dict = field(default_factory=dict)

    def __post_init__(self):
        m = np.ascontiguousarray(self.metrics, dtype=np.float64)
        if m.ndim != 1 or m.shape[0] == 0:
            raise DomainError("metrics must be a nonempty 1-d array")
        if not np.all(np.isfinite(m)):
            raise DomainError("metrics must be finite")
        object.__setattr__(self, "metrics", m)

    @property
    def N(self) -> int:
        return self.metrics.shape[0]


def ga_reliability(channel_llr_mean: float, n: int) -> ReliabilityProfile:
    """Gaussian-approximation LLR means for all N = 2^n synthetic channels.

    The recursion follows the decoder's tree: the check child's mean is
    phi_inv(1 - (1-phi(m))^2) (computed in the log domain as
    phi_inv_log(lp + ln(2 - e^lp))), the variable child doubles the mean.
    Output is in u order; metric(u2) >= metric(u1) at any positive mean.
    """
    if not np.isfinite(channel_llr_mean) or channel_llr_mean < 0:
        raise DomainError(f"channel LLR mean must be >= 0, got {channel_llr_mean}")
    if n < 0:
        raise DomainError("n must be nonnegative")
    means = np.array([float(channel_llr_mean)])
    for _ in range(n):
        lp = _phi_log(means)
        lminus = lp + np.log(2.0 - np.exp(lp))
        m_minus = _phi_inv_log(lminus)
        m_plus = 2.0 * means
        nxt = np.empty(means.shape[0] * 2)
        nxt[0::2] = m_minus
        nxt[1::2] = m_plus
        means = nxt
    descriptor = {"kind": "biawgn-ga", "llr_mean": float(channel_llr_mean)}
    if channel_llr_mean > 0:
        # mean = 2/sigma^2 on a BIAWGN, so the profile can carry its capacity
        from .channels import biawgn_capacity

        descriptor["capacity"] = biawgn_capacity(math.sqrt(2.0 / channel_llr_mean))
    return ReliabilityProfile(means, descriptor)


def mc_reliability(channel, n: int, trials: int, seed) -> ReliabilityProfile:
    """Monte-Carlo genie-aided SC reliability.

    ``channel`` must expose llr_samples(rng, bits) -> channel-quality LLRs
    conditioned on the transmitted bit at each position (see channels module
    samplers). Metric = 1 - genie first-error rate per u index. Profiles whose
    best metric stays near 0.5 carry no usable positions and are flagged with
    descriptor["unusable"] = True.
    """
    if trials < 1:
        raise DomainError("trials must be >= 1")
    if n < 0:
        raise DomainError("n must be nonnegative")
    N = 1 << n
    rng = np.random.default_rng(seed)
    errs = np.zeros(N, dtype=np.int64)
    for _ in range(trials):
        u = rng.integers(0, 2, size=N, dtype=np.uint8)
        w = kernels.butterfly(u)
        llrs_w = channel.llr_samples(rng, w)
        errs += kernels.genie_kernel(np.asarray(llrs_w, dtype=np.float64), u)
    metrics = 1.0 - errs / float(trials)
    desc = {
        "kind": "mc",
        "channel": repr(channel),
        "trials": int(trials),
        "unusable": bool(metrics.max() < 0.6),
    }
    cap = getattr(channel, "capacity_hint", None)
    if cap is not None:
        desc["capacity"] = float(cap)
    return ReliabilityProfile(metrics, desc)


def info_set(profile: ReliabilityProfile, K: int) -> np.ndarray:
    """Indices of the K largest metrics, ascending; ties break toward the
    smaller index."""
    if K < 0 or K > profile.N:
        raise DomainError(f"K={K} out of range for N={profile.N}")
    order = np.argsort(-profile.metrics, kind="stable")
    return np.sort(order[:K])


def compute_K(Q: int, info_sizes: Sequence[int]) -> int:
    """K = min over m of floor(|I_m| Q / m), rounded down to a multiple of Q."""
    sizes = list(info_sizes)
    if len(sizes) == 0:
        raise DomainError("info_sizes must be nonempty")
    if len(sizes) != Q:
        raise DomainError(f"expected {Q} info sizes, got {len(sizes)}")
    if any(sizes[i] > sizes[i + 1] for i in range(len(sizes) - 1)):
        raise DomainError("info_sizes must be nondecreasing")
    k = min((sizes[m - 1] * Q) // m for m in range(1, Q + 1))
    return k - (k % Q)


@dataclass(frozen=True)
class DegradedFamily:
    """Q channels ordered worst to best with nominal capacities r_m = m r / Q,
    one reliability profile each, and the per-channel information set sizes."""

    Q: int
    capacities: np.ndarray
    profiles: List[ReliabilityProfile]
    info_sizes: List[int]

    def __post_init__(self):
        caps = np.asarray(self.capacities, dtype=np.float64)
        if self.Q < 1:
            raise DomainError("Q must be >= 1")
        if caps.shape != (self.Q,) or len(self.profiles) != self.Q or len(self.info_sizes) != self.Q:
            raise DomainError("family fields must all have length Q")
        # nondecreasing, not strict: per-level capacities may saturate at 1
        if np.any(np.diff(caps) < 0) and self.Q > 1:
            raise DomainError("capacities must be nondecreasing")
        object.__setattr__(self, "capacities", caps)

    @property
    def N(self) -> int:
        return self.profiles[0].N


@dataclass(frozen=True)
class NestedTierPlan:
    """Q disjoint tiers S_1..S_Q with the containment property: the union of
    the first m tiers sits inside the m-th channel's information set. Tier
    sizes are K/Q each on the standard path; per-level plans use explicit
    sizes (see build_nested_tiers)."""

    Q: int
    K: int
    tiers: List[np.ndarray]
    sizes: List[int]

    def __post_init__(self):
        if len(self.tiers) != self.Q or len(self.sizes) != self.Q:
            raise DomainError("need exactly Q tiers and sizes")
        seen = set()
        for q, (t, sz) in enumerate(zip(self.tiers, self.sizes), start=1):
            t = np.asarray(t, dtype=np.int64)
            if t.shape[0] != sz:
                raise DomainError(f"tier {q} has {t.shape[0]} indices, expected {sz}")
            s = set(t.tolist())
            if len(s) != t.shape[0] or s & seen:
                raise ConstructionError(f"tier {q} overlaps an earlier tier")
            seen |= s
        if sum(self.sizes) != self.K:
            raise DomainError("tier sizes must sum to K")

    def cumulative(self, m: int) -> np.ndarray:
        """Sorted union of tiers 1..m."""
        return np.sort(np.concatenate([self.tiers[i] for i in range(m)])) if m else np.array([], dtype=np.int64)


def build_nested_tiers(
    family: DegradedFamily, K: int, tier_sizes: Optional[Sequence[int]] = None
) -> NestedTierPlan:
    """Greedy nested tiering.

    S_m = the (size_m) most reliable indices of channel m's profile among
    I_m minus the earlier tiers, where I_m = info_set(profile_m, info_sizes[m]).
    The containment invariant (union of first m tiers inside I_m for every m)
    is verified explicitly afterwards; violations raise ConstructionError
    naming the first bad m.

    tier_sizes overrides the equal K/Q split (used by the per-level plans
    where tier increments come from the rate table). K is ignored in that
    case and recomputed as the sum.
    """
    Q = family.Q
    if tier_sizes is None:
        if K % Q != 0:
            raise DomainError(f"K={K} not divisible by Q={Q}")
        if K > compute_K(Q, family.info_sizes):
            raise DomainError(f"K={K} exceeds compute_K for this family")
        sizes = [K // Q] * Q
    else:
        sizes = [int(s) for s in tier_sizes]
        if len(sizes) != Q or any(s < 0 for s in sizes):
            raise DomainError("tier_sizes must be Q nonnegative counts")
        K = int(sum(sizes))

    info_sets = [info_set(family.profiles[m], family.info_sizes[m]) for m in range(Q)]
    info_masks = []
    N = family.N
    for iset in info_sets:
        mask = np.zeros(N, dtype=bool)
        mask[iset] = True
        info_masks.append(mask)

    taken = np.zeros(N, dtype=bool)
    tiers: List[np.ndarray] = []
    for m in range(Q):
        avail = info_masks[m] & ~taken
        cand = np.flatnonzero(avail)
        if cand.shape[0] < sizes[m]:
            raise ConstructionError(
                f"tier {m + 1}: only {cand.shape[0]} candidates inside I_{m + 1} "
                f"after earlier tiers, need {sizes[m]}"
            )
        order = np.argsort(-family.profiles[m].metrics[cand], kind="stable")
        sel = np.sort(cand[order[: sizes[m]]])
        tiers.append(sel)
        taken[sel] = True

    # explicit containment verification, never assumed from profile order
    union = np.zeros(N, dtype=bool)
    for m in range(Q):
        union[tiers[m]] = True
        outside = int(np.count_nonzero(union & ~info_masks[m]))
        if outside:
            raise ConstructionError(
                f"containment violated at m={m + 1}: {outside} tier indices "
                f"fall outside I_{m + 1}"
            )
    return NestedTierPlan(Q=Q, K=K, tiers=tiers, sizes=sizes)


@dataclass(frozen=True)
class DegradationReport:
    entries: List[tuple]
    ok: bool


def check_degradation(
    w_profile: ReliabilityProfile,
    v_profile: ReliabilityProfile,
    K_grid: Sequence[int],
) -> DegradationReport:
    """For each K in the grid, check info_set(v, K) against info_set(w, K')
    with K' = K scaled by the capacity ratio of the two profiles (from their
    descriptors; ratio 1 when absent). v is the degraded (worse) channel, so
    its information choices should persist in w's larger set."""
    if w_profile.N != v_profile.N:
        raise DomainError("profiles must have equal length")
    cw = float(w_profile.descriptor.get("capacity", 1.0))
    cv = float(v_profile.descriptor.get("capacity", 1.0))
    ratio = cw / cv if cv > 0 else 1.0
    entries = []
    for K in K_grid:
        kw = min(w_profile.N, int(np.ceil(K * ratio)))
        iv = set(info_set(v_profile, int(K)).tolist())
        iw = set(info_set(w_profile, kw).tolist())
        violations = len(iv - iw)
        entries.append((int(K), kw, violations))
    return DegradationReport(entries=entries, ok=all(e[2] == 0 for e in entries))


# --- flat text serialization (profile cache between CLI runs) ---------------


def save_profile(profile: ReliabilityProfile, path) -> None:
    with open(path, "w") as fh:
        for i, v in enumerate(profile.metrics):
            fh.write(f"{i} {v!r}\n")


def load_profile(path, descriptor: Optional[Dict] = None) -> ReliabilityProfile:
    idx = []
    vals = []
    with open(path) as fh:
        for line in fh:
            a, b = line.split()
            idx.append(int(a))
            vals.append(float(b))
    metrics = np.empty(len(vals))
    metrics[np.asarray(idx)] = vals
    return ReliabilityProfile(metrics, descriptor or {"kind": "file"})


def save_tier_plan(plan: NestedTierPlan, path) -> None:
    with open(path, "w") as fh:
        for t in plan.tiers:
            fh.write(" ".join(str(int(i)) for i in t) + "\n")


def load_tier_plan(path) -> NestedTierPlan:
    tiers = []
    with open(path) as fh:
        for line in fh:
            tiers.append(np.array([int(x) for x in line.split()], dtype=np.int64))
    sizes = [t.shape[0] for t in tiers]
    return NestedTierPlan(Q=len(tiers), K=int(sum(sizes)), tiers=tiers, sizes=sizes)

"""MIMO transmission with MMSE-SIC detection and sum-rate-only feedback.

The spatial layers are the M parallel channels of the staircase scheme,
indexed in detection order (strongest first-pass SINR first). Each layer
carries one unit-energy 2^T-ASK stream per real dimension: consecutive pairs
of a frame's N real symbols form N/2 complex uses, scaled by 1/sqrt(2) so the
complex symbol has unit energy. The model is y = H x + n with n ~ CN(0, I/rho)
per complex use, matching C = log2 det(I + rho H H^H).

MMSE-SIC per detection step: already-detected layers are cancelled (true
symbols in genie mode, re-encoded decisions in decoded-feedback mode), the
unbiased MMSE output for the current layer is an AWGN channel at the step's
SINR gamma, and scaling the real/imaginary parts by sqrt(2) yields two real
observations with noise deviation 1/sqrt(gamma) per ASK symbol.

Rates: sum_rate_feedback is bits per complex channel use, everything handed
to the codec is per real dimension (half of it).
"""

import math
from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from ..channels import map_bits_to_symbols
from ..codec import (
    JointDecodeResult,
    ParallelConfig,
    joint_decode,
    make_parallel_config,
    super_encode,
)
from ..errors import ConfigurationError, DomainError
from ..scheduling import OrderingScheme, make_ordering, staircase_assign

__all__ = [
    "MimoLink",
    "LayerReport",
    "MimoRunResult",
    "mimo_capacity",
    "first_pass_gammas",
    "mmse_sic_gammas",
    "detection_order",
    "mimo_run",
]


@dataclass(frozen=True)
class MimoLink:
    """Channel matrix H (receive x transmit), linear SNR rho, and the number
    of spatial layers (defaults to min(N_r, N_t))."""

    H: np.ndarray
    snr: float
    n_layers: Optional[int] = None

    def __post_init__(self):
        H = np.ascontiguousarray(self.H, dtype=np.complex128)
        if H.ndim != 2 or not np.all(np.isfinite(H.real) & np.isfinite(H.imag)):
            raise DomainError("H must be a finite complex matrix")
        if not (np.isfinite(self.snr) and self.snr > 0):
            raise DomainError("snr must be positive and finite")
        layers = self.n_layers if self.n_layers is not None else min(H.shape)
        if not 1 <= layers <= min(H.shape):
            raise DomainError(f"n_layers must be in 1..{min(H.shape)}")
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "n_layers", int(layers))


def mimo_capacity(link: MimoLink) -> float:
    """log2 det(I + rho H H^H) in bits per complex use, via eigenvalues."""
    H = link.H
    lam = np.linalg.eigvalsh(H @ H.conj().T).real
    lam = np.clip(lam, 0.0, None)
    return float(np.sum(np.log2(1.0 + link.snr * lam)))


def _gamma(rho: float, h: np.ndarray, interferers: Sequence[np.ndarray]) -> float:
    """Post-MMSE SINR of column h with the given interfering columns."""
    Nr = h.shape[0]
    C = np.eye(Nr, dtype=np.complex128)
    for g in interferers:
        C += rho * np.outer(g, g.conj())
    val = rho * np.vdot(h, np.linalg.solve(C, h)).real
    return float(max(val, 0.0))


def first_pass_gammas(link: MimoLink) -> np.ndarray:
    """Per-layer MMSE SINR before any cancellation (all other layers act as
    interference); the basis for the detection order."""
    cols = [link.H[:, i] for i in range(link.n_layers)]
    return np.array(
        [
            _gamma(link.snr, cols[i], [c for j, c in enumerate(cols) if j != i])
            for i in range(link.n_layers)
        ]
    )


def detection_order(gammas_first_pass: Sequence[float]) -> np.ndarray:
    """1-based layer indices sorted by descending SINR, ties toward the lower
    index."""
    g = np.asarray(gammas_first_pass, dtype=np.float64)
    if g.size == 0:
        raise DomainError("need at least one layer")
    return np.lexsort((np.arange(g.size), -g)) + 1


def mmse_sic_gammas(link: MimoLink, order: Sequence[int]) -> np.ndarray:
    """Per-detection-step SINRs: step k detects layer order[k] treating the
    not-yet-detected layers as interference and the already-detected ones as
    perfectly cancelled. The sum of log2(1+gamma) over steps equals
    mimo_capacity for every order."""
    idx = [int(i) - 1 for i in order]
    if sorted(idx) != list(range(link.n_layers)):
        raise DomainError(f"order must be a permutation of 1..{link.n_layers}")
    cols = [link.H[:, i] for i in idx]
    out = np.empty(len(cols))
    for k in range(len(cols)):
        out[k] = _gamma(link.snr, cols[k], cols[k + 1 :])
    return out


@dataclass(frozen=True)
class LayerReport:
    """Detection order (1-based layers), per-step SINRs, and the per-step
    rates q_k*r/Q actually allocated (bits per complex use)."""

    order: Tuple[int, ...]
    gammas: Tuple[float, ...]
    rates: Tuple[float, ...]


@dataclass(frozen=True)
class MimoRunResult:
    solved: np.ndarray  # decoder's own per-block view
    correct: np.ndarray  # vs the true messages
    report: LayerReport
    depths: Tuple[int, ...]
    outage: bool


def _pack_complex(symbols: np.ndarray) -> np.ndarray:
    """N real unit-energy ASK symbols -> N/2 unit-energy complex symbols."""
    return (symbols[0::2] + 1j * symbols[1::2]) / math.sqrt(2.0)


def _unpack_complex(z: np.ndarray) -> np.ndarray:
    """Inverse scaling of _pack_complex: interleaved sqrt(2)*(re, im)."""
    out = np.empty(2 * z.shape[0])
    out[0::2] = math.sqrt(2.0) * z.real
    out[1::2] = math.sqrt(2.0) * z.imag
    return out


def mimo_run(
    link: MimoLink,
    sum_rate_feedback: float,
    config: Optional[ParallelConfig] = None,
    seed=0,
    scheme: Optional[OrderingScheme] = None,
    horizon: int = 4,
    Q: int = 8,
    N: int = 256,
    mode: str = "genie",
) -> MimoRunResult:
    """Transmit a staircase stream over the spatial layers and decode with
    MMSE-SIC feeding the joint decoder.

    sum_rate_feedback: total bits per complex use, the only rate information
    the transmitter needs. Layers map to scheme channels in detection order.
    mode "genie" cancels with the transmitted symbols (the perfect-
    cancellation assumption); "decoded" cancels with re-encoded decisions as
    they become available, deferring a layer's slot until the slots of all
    earlier detected, nonzero-depth layers are done. Layers at depth 0 are
    never cancelled in decoded mode, which leaves their interference
    unmodelled by the SINR figures; that mismatch is part of what the mode
    measures.
    """
    if mode not in ("genie", "decoded"):
        raise DomainError(f"unknown mode {mode!r}")
    if not (np.isfinite(sum_rate_feedback) and sum_rate_feedback > 0):
        raise DomainError("sum_rate_feedback must be positive")
    M = link.n_layers
    r_dim = sum_rate_feedback / 2.0

    order = detection_order(first_pass_gammas(link))
    gammas = mmse_sic_gammas(link, order)
    caps_dim = [0.5 * math.log2(1.0 + g) for g in gammas]

    if config is None:
        config = make_parallel_config(M=M, Q=Q, N=N, sum_rate=r_dim)
    if scheme is None:
        scheme = make_ordering(config.M, config.Q, best_effort=(config.M >= 4))
    if config.M != M:
        raise ConfigurationError(f"config is for {config.M} channels, link has {M}")
    if config.N % 2:
        raise ConfigurationError("complex packing needs an even N")
    Q = config.Q

    ss = np.random.SeedSequence(seed)
    s_msg, s_noise = ss.spawn(2)
    rng_msg = np.random.default_rng(s_msg)
    messages = rng_msg.integers(0, 2, size=(horizon, config.K), dtype=np.uint8)
    frames = super_encode(messages, config, scheme)

    assign = staircase_assign(Q, horizon)
    num_slots = assign.num_slots
    n_c = config.N // 2
    cols = [link.H[:, int(order[k]) - 1] for k in range(M)]
    rho = link.snr

    # received complex block per slot: (N_r, N/2)
    rng_noise = np.random.default_rng(s_noise)
    x_true = [
        [_pack_complex(frames[k][s].symbols) for s in range(num_slots)]
        for k in range(M)
    ]
    received = []
    nr = link.H.shape[0]
    for s in range(num_slots):
        y = np.zeros((nr, n_c), dtype=np.complex128)
        for k in range(M):
            y += np.outer(cols[k], x_true[k][s])
        noise = rng_noise.normal(size=(nr, n_c)) + 1j * rng_noise.normal(size=(nr, n_c))
        y += noise * math.sqrt(1.0 / (2.0 * rho))
        received.append(y)

    # unbiased MMSE filters per detection step, later steps as interference
    filters = []
    for k in range(M):
        C = np.eye(nr, dtype=np.complex128)
        for j in range(k + 1, M):
            C += rho * np.outer(cols[j], cols[j].conj())
        w = np.linalg.solve(C, cols[k])
        mu = np.vdot(w, cols[k])
        filters.append(w / mu)

    sigmas_eff = [1.0 / math.sqrt(g) if g > 0 else math.inf for g in gammas]
    depths = [
        int(min(Q, math.floor(c * Q / config.sum_rate + 1e-9))) if c > 0 else 0
        for c in caps_dim
    ]

    decoded_symbols: Dict[Tuple[int, int], np.ndarray] = {}

    def reconstruct(k: int, s: int, codewords: np.ndarray) -> None:
        sym = map_bits_to_symbols(list(codewords), config.mapper)
        decoded_symbols[(k, s)] = _pack_complex(sym)

    def observe(channel: int, slot: int) -> Optional[np.ndarray]:
        k = channel - 1
        s = slot - 1
        y = received[s].copy()
        for j in range(k):
            if mode == "genie":
                y -= np.outer(cols[j], x_true[j][s])
            elif depths[j] > 0:
                got = decoded_symbols.get((j, s))
                if got is None:
                    return None  # defer until the earlier layer's slot is done
                y -= np.outer(cols[j], got)
        z = filters[k].conj() @ y  # (N/2,)
        return _unpack_complex(z)

    def task_done(channel: int, slot: int, codewords: np.ndarray) -> None:
        reconstruct(channel - 1, slot - 1, codewords)

    result: JointDecodeResult = joint_decode(
        None,
        sigmas_eff,
        caps_dim,
        config,
        scheme,
        horizon=horizon,
        depths=depths,
        obs_provider=observe,
        on_task_done=task_done if mode == "decoded" else None,
    )

    report = LayerReport(
        order=tuple(int(i) for i in order),
        gammas=tuple(float(g) for g in gammas),
        rates=tuple(2.0 * q * config.sum_rate / Q for q in depths),
    )
    correct = result.solved & np.all(result.messages == messages, axis=1)
    return MimoRunResult(
        solved=result.solved.copy(),
        correct=correct,
        report=report,
        depths=tuple(depths),
        outage=result.outage,
    )

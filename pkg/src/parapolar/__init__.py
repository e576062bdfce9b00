"""Universal polar coding over parallel non-binary channels.

Binary polar codes with known-bit cancellation, nested reliability tiers,
multilevel ASK decomposition, staircase scheduling with GF(2) combining, a
joint successive decoder, and HARQ/MIMO applications built on top.
"""

from ._backend import BACKEND, LLR_SAT
from .channels import (
    BiAwgnChannel,
    FadingProcess,
    MultilevelChannel,
    awgn_transmit,
    biawgn_capacity,
    decompose_levels,
    fading_gains,
    fading_sample,
    invert_biawgn_capacity,
    invert_symbol_capacity,
    level_capacities,
    level_capacity_quadrature,
    level_channel_sampler,
    level_llr,
    map_bits_to_symbols,
    symbol_mi_mc,
    symbol_mi_quadrature,
)
from .codec import (
    EncodedFrame,
    JointDecodeResult,
    ParallelConfig,
    RateTable,
    allocate_rates,
    balance_depths,
    biawgn_family,
    channel_decode_prefix,
    depths_from_capacities,
    frames_to_hex,
    joint_decode,
    make_parallel_config,
    super_encode,
    transmit,
)
from .construction import (
    DegradedFamily,
    NestedTierPlan,
    ReliabilityProfile,
    build_nested_tiers,
    check_degradation,
    compute_K,
    ga_reliability,
    info_set,
    load_profile,
    load_tier_plan,
    mc_reliability,
    save_profile,
    save_tier_plan,
)
from .errors import (
    ConfigurationError,
    ConstructionError,
    DomainError,
    InfeasibleRateError,
    ParapolarError,
    PipelineOrderError,
    ScopeError,
)
from .polar import (
    CodeConfig,
    bit_reversal_permutation,
    genie_error_indicators,
    polar_encode,
    sc_decode,
)
from .scheduling import (
    OrderingScheme,
    PrefixRankReport,
    SlotAssignment,
    TierPayload,
    combine_subblocks,
    make_ordering,
    scheme_to_text,
    staircase_assign,
    verify_prefix_rank,
)

__version__ = "0.1.0"

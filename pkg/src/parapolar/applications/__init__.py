from .harq import (
    HarqPolicy,
    HarqResult,
    depth_capacity_floors,
    harq_oracle,
    harq_run,
    make_harq_context,
    median_oneshot_capacity,
)
from .mimo import (
    LayerReport,
    MimoLink,
    MimoRunResult,
    detection_order,
    first_pass_gammas,
    mimo_capacity,
    mimo_run,
    mmse_sic_gammas,
)

__all__ = [
    "HarqPolicy",
    "HarqResult",
    "depth_capacity_floors",
    "harq_oracle",
    "harq_run",
    "make_harq_context",
    "median_oneshot_capacity",
    "LayerReport",
    "MimoLink",
    "MimoRunResult",
    "detection_order",
    "first_pass_gammas",
    "mimo_capacity",
    "mimo_run",
    "mmse_sic_gammas",
]

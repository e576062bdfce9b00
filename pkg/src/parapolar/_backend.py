"""Kernel backend selection.

Imports the compiled extension when present, otherwise the pure-python twin.
Set PARAPOLAR_FORCE_PY=1 to force the python kernels (used by the equivalence
tests and the benchmark).
"""

import os

if os.environ.get("PARAPOLAR_FORCE_PY"):
    from . import _kernels_py as kernels

    BACKEND = "python"
else:
    try:
        from . import _kernels as kernels  # type: ignore[attr-defined]

        BACKEND = "compiled"
    except ImportError:
        from . import _kernels_py as kernels

        BACKEND = "python"

LLR_SAT = kernels.LLR_SAT

"""The compiled and pure-python kernels must be interchangeable."""

import os
import subprocess
import sys

import numpy as np
import pytest

from parapolar import _backend
from parapolar import _kernels_py as kpy

try:
    from parapolar import _kernels as kc
except ImportError:
    kc = None

needs_compiled = pytest.mark.skipif(kc is None, reason="extension not built")


def test_backend_reports_a_known_name():
    assert _backend.BACKEND in ("compiled", "python")


def test_force_py_env_selects_python_backend():
    env = dict(os.environ, PARAPOLAR_FORCE_PY="1")
    out = subprocess.run(
        [sys.executable, "-c", "import parapolar; print(parapolar.BACKEND)"],
        capture_output=True, text=True, env=env, check=True,
    )
    assert out.stdout.strip() == "python"


@needs_compiled
def test_butterfly_equivalence():
    rng = np.random.default_rng(0)
    for n in range(11):
        u = rng.integers(0, 2, size=2**n, dtype=np.uint8)
        assert np.array_equal(kpy.butterfly(u), kc.butterfly(u))


@needs_compiled
@pytest.mark.parametrize("minsum", [False, True])
def test_sc_kernel_equivalence(minsum):
    rng = np.random.default_rng(42)
    for n in (1, 3, 5, 7):
        N = 2**n
        for _ in range(20):
            llrs = np.clip(rng.normal(scale=4.0, size=N), -90, 90)
            mask = (rng.random(N) < 0.4).astype(np.uint8)
            vals = rng.integers(0, 2, size=N, dtype=np.uint8) * mask
            a = kpy.sc_kernel(llrs.copy(), mask, vals, minsum)
            b = kc.sc_kernel(llrs.copy(), mask, vals, minsum)
            assert np.array_equal(a, b), (n, minsum)


@needs_compiled
def test_genie_kernel_equivalence():
    rng = np.random.default_rng(9)
    N = 64
    for _ in range(20):
        llrs = np.clip(rng.normal(scale=2.0, size=N), -90, 90)
        u = rng.integers(0, 2, size=N, dtype=np.uint8)
        assert np.array_equal(kpy.genie_kernel(llrs.copy(), u), kc.genie_kernel(llrs.copy(), u))


def test_llr_sat_consistent():
    assert kpy.LLR_SAT == _backend.LLR_SAT
    if kc is not None:
        assert kc.LLR_SAT == kpy.LLR_SAT

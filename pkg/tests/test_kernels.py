import os
import subprocess
import sys

import numpy as np
import pytest

from sklab import _kernels
from sklab.geometry import orthant
from sklab.skorokhod import SkorokhodStepper

needs_compiled = pytest.mark.skipif(_kernels.compiled is None, reason="compiled kernels not built")


def oblique3():
    return orthant(3, [[1.0, 0.3, -0.2], [0.1, 1.0, 0.3], [-0.3, 0.2, 1.0]])


def test_get_backend():
    assert _kernels.get_backend("python") is _kernels.fallback
    assert _kernels.get_backend() is _kernels.backend
    with pytest.raises(ValueError):
        _kernels.get_backend("fortran")


def test_environment_forces_fallback():
    code = "from sklab import _kernels; print(_kernels.BACKEND_NAME)"
    env = dict(os.environ, SKLAB_BACKEND="python")
    res = subprocess.run([sys.executable, "-c", code], capture_output=True, text=True, env=env)
    assert res.returncode == 0 and res.stdout.strip() == "python"


@needs_compiled
def test_default_backend_is_compiled():
    if os.environ.get("SKLAB_BACKEND", "").lower() == "python":
        pytest.skip("fallback forced by environment")
    assert _kernels.BACKEND_NAME == "compiled"


@needs_compiled
def test_sp_step_parity():
    D = oblique3()
    args = SkorokhodStepper(D, backend="python").args
    rng = np.random.default_rng(0)
    for _ in range(500):
        x = np.abs(rng.standard_normal(3)) * (rng.uniform(size=3) > 0.4)
        inc = rng.standard_normal(3)
        a = _kernels.compiled.sp_step(x, inc, *args)
        b = _kernels.fallback.sp_step(x, inc, *args)
        assert a[3] == b[3]
        assert np.allclose(a[0], b[0], atol=1e-12) and np.allclose(a[1], b[1], atol=1e-12)


@needs_compiled
def test_sp_path_parity():
    D = oblique3()
    args = SkorokhodStepper(D, backend="python").args
    incs = np.random.default_rng(1).standard_normal((2000, 3)) * 0.1
    a = _kernels.compiled.sp_path(np.zeros(3), incs, *args)
    b = _kernels.fallback.sp_path(np.zeros(3), incs, *args)
    for u, v in zip(a, b):
        assert np.allclose(u, v, atol=1e-11)


@needs_compiled
def test_lemke_parity_on_random_problems():
    rng = np.random.default_rng(2)
    for _ in range(300):
        k = int(rng.integers(1, 6))
        M = rng.standard_normal((k, k)) + k * np.eye(k)
        q = rng.standard_normal(k)
        za, _, sa = _kernels.compiled.lemke_solve(M, q, None)
        zb, _, sb = _kernels.fallback.lemke_solve(M, q, None)
        assert sa == sb
        if sa == 0:
            assert np.allclose(za, zb, atol=1e-10)

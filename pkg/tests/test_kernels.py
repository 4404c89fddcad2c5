"""The numba kernels and their numpy twins must agree."""

import numpy as np
import pytest

from hfsad import _kernels
from hfsad._accel import NUMBA_AVAILABLE


def _smoothed_inputs(rng, n=5000):
    u = rng.normal(0, 3, n)
    u[::97] = 0.0
    w = rng.uniform(0, 4, n)
    w[::89] = 0.0
    mu = np.exp(rng.uniform(-9, 1, n))
    t = np.exp(rng.uniform(-3, 3, n))
    return u, w, mu, t


def test_smoothed_backends_agree(rng):
    u, w, mu, t = _smoothed_inputs(rng)
    a = _kernels.smoothed_prox_numba(u, w, mu, t, np.empty_like(u))
    b = _kernels.smoothed_prox_numpy(u, w, mu, t, np.empty_like(u))
    assert np.allclose(a, b, atol=1e-12, rtol=0)


def test_smoothed_stationarity(rng):
    u, w, mu, t = _smoothed_inputs(rng)
    v = _kernels.smoothed_prox_numpy(u, w, mu, t, np.empty_like(u))
    resid = w * v / np.hypot(v, mu) + (v - u) / t
    assert np.max(np.abs(resid * t)) < 1e-10


def test_phase_backends_agree(rng):
    n, m = 3000, 4
    V = rng.normal(0, 3, (n, m))
    X = rng.normal(size=(n, m))
    X[::50] = 0.0
    y = rng.exponential(3.0, n)
    t = np.exp(rng.uniform(-4, 1, n))
    a = _kernels.phase_prox_numba(V, X, y, t, 5.0, np.empty_like(V))
    b = _kernels.phase_prox_numpy(V, X, y, t, 5.0, np.empty_like(V))
    assert np.allclose(a, b, atol=1e-12, rtol=0)


def test_phase_tie_order(rng):
    # a = 0 makes +sqrt(y) and -sqrt(y) tie; both backends pick +sqrt(y)
    V = np.zeros((1, 2))
    X = np.array([[1.0, 0.0]])
    for fn in (_kernels.phase_prox_numba, _kernels.phase_prox_numpy):
        out = fn(V, X, np.array([4.0]), np.array([10.0]), 5.0, np.empty_like(V))
        assert np.allclose(out, [[2.0, 0.0]])


@pytest.mark.skipif(not NUMBA_AVAILABLE, reason="numba backend disabled")
def test_numba_is_compiled():
    assert hasattr(_kernels.smoothed_prox_numba, "signatures")


def test_numpy_backend_env(tmp_path):
    import subprocess
    import sys

    code = ("import hfsad._accel as a, hfsad.prox_ops as p; "
            "print(a.BACKEND, p.prox_smoothed_penalty_scalar(1.0, 1.0, 0.01, 0.5))")
    out = subprocess.run([sys.executable, "-c", code], env={"HFSAD_BACKEND": "numpy", "PATH": ""},
                         capture_output=True, text=True, check=True).stdout.split()
    assert out[0] == "numpy"
    assert float(out[1]) == pytest.approx(0.5000999300739063, abs=1e-12)

import json
import os
import subprocess
import sys

import numpy as np
import pytest

from robust_cbf import _accel
from robust_cbf import _kernels as K
from robust_cbf.oracle import sample_ball
from robust_cbf.sdp import solve_safe_control
from robust_cbf.verification import random_instance

needs_numba = pytest.mark.skipif(not _accel.USE_NUMBA, reason="numba backend disabled")


def test_backend_name():
    assert _accel.backend() in ("numba", "numpy")


def test_min_quadratic_over_points():
    rng = np.random.default_rng(0)
    Z = sample_ball(500, 3, 1)
    A = rng.standard_normal((3, 3))
    A = A + A.T
    b = rng.standard_normal(3)
    val, idx = K.min_quadratic_over_points(Z, A, b, 0.5)
    vals = np.einsum("ij,jk,ik->i", Z, A, Z) + Z @ b + 0.5
    assert val == pytest.approx(vals.min(), abs=1e-13)
    assert vals[idx] == pytest.approx(val, abs=1e-13)


def test_logdet_outside_cone_is_nan():
    F0 = np.diag([1.0, -1.0])
    Fs = np.zeros((1, 2, 2))
    assert np.isnan(K.logdet_or_nan(F0, Fs, np.zeros(1)))
    assert K.logdet_or_nan(np.eye(2) * np.e, Fs, np.zeros(1)) == pytest.approx(2.0)


@needs_numba
def test_compiled_kernels_match_python_source():
    rng = np.random.default_rng(2)
    F0 = np.eye(4) * 3.0
    Fs = rng.standard_normal((3, 4, 4))
    Fs = Fs + Fs.transpose(0, 2, 1)
    x = rng.standard_normal(3) * 0.1
    c = rng.standard_normal(3)
    g1, H1, ld1 = K.grad_hess(c, F0, Fs, x, 2.0)
    g2, H2, ld2 = K.grad_hess.py_func(c, F0, Fs, x, 2.0)
    np.testing.assert_allclose(g1, g2, rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(H1, H2, rtol=1e-12, atol=1e-12)
    assert ld1 == pytest.approx(ld2, rel=1e-12)


_PROBE = """
import json, numpy as np
from robust_cbf import _accel
from robust_cbf.sdp import solve_safe_control
from robust_cbf.verification import random_instance
rng = np.random.default_rng(5)
out = []
for _ in range(25):
    s = solve_safe_control(random_instance(rng, 3, 2))
    out.append([s.status.value, list(s.u), s.lam])
print(json.dumps({"backend": _accel.backend(), "results": out}))
"""


def test_numpy_fallback_matches_in_subprocess():
    env = dict(os.environ, ROBUST_CBF_NUMBA="0")
    r = subprocess.run([sys.executable, "-c", _PROBE], capture_output=True, text=True, env=env, check=True)
    data = json.loads(r.stdout)
    assert data["backend"] == "numpy"
    rng = np.random.default_rng(5)
    for status, u, lam in data["results"]:
        s = solve_safe_control(random_instance(rng, 3, 2))
        assert s.status.value == status
        if status == "Optimal":
            assert np.linalg.norm(s.u - np.array(u)) <= 1e-6 * (1 + np.linalg.norm(s.u))

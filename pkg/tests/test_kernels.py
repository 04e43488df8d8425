import os
import subprocess
import sys

import numpy as np
import pytest

from momentflow import _pykernels, kernels

BACKENDS = kernels.backends()


def test_python_backend_always_present():
    assert "python" in BACKENDS
    assert kernels.BACKEND in BACKENDS


@pytest.mark.parametrize("n", [2, 3, 4, 6])
def test_backends_agree(n):
    rng = np.random.default_rng(n)
    dim = n * n * (n - 1) // 2
    v = rng.normal(size=dim)
    X = rng.normal(size=(n, n))
    g = rng.normal(size=(n, n)) + 3 * np.eye(n)
    ginv = np.linalg.inv(g)
    ref = _pykernels
    for name, mod in BACKENDS.items():
        assert np.allclose(mod.act_packed(X, v, n), ref.act_packed(X, v, n), atol=1e-12), name
        assert np.allclose(mod.moment_packed(v, n), ref.moment_packed(v, n), atol=1e-12), name
        assert np.allclose(mod.transport_packed(g, ginv, v, n), ref.transport_packed(g, ginv, v, n),
                           atol=1e-12), name
        u = v / np.sqrt(2 * v @ v)
        got, want = mod.sphere_field(u, n, 1.5), ref.sphere_field(u, n, 1.5)
        assert np.allclose(got[0], want[0], atol=1e-12), name
        assert got[1:] == pytest.approx(want[1:], rel=1e-12), name


def test_pack_unpack_roundtrip():
    rng = np.random.default_rng(1)
    v = rng.normal(size=4 * 4 * 3 // 2)
    c = kernels.unpack(v, 4)
    assert np.allclose(c, -c.transpose(1, 0, 2))
    assert np.array_equal(kernels.pack(c), v)


def test_pure_python_switch():
    env = dict(os.environ, MOMENTFLOW_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "from momentflow import kernels; print(kernels.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"

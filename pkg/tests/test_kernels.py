import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hierprot import _accel, _kernels_py

compiled = pytest.importorskip("hierprot._kernels")


def test_backend_selected():
    assert _accel.BACKEND == "cython"
    assert _accel.nw_align is compiled.nw_align


def test_env_forces_fallback():
    code = "from hierprot import _accel; print(_accel.BACKEND)"
    env = dict(os.environ, HIERPROT_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


def test_contact_pairs_agree(rng):
    for _ in range(30):
        x = rng.uniform(0, 25, size=(int(rng.integers(0, 60)), 3))
        t = float(rng.uniform(1, 12))
        a = compiled.contact_pairs(x, t)
        b = _kernels_py.contact_pairs(x, t)
        assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])


def test_contact_boundary_strict():
    x = np.array([[0.0, 0, 0], [8.0, 0, 0], [0, 7.999, 0]])
    for k in (compiled, _kernels_py):
        ii, jj = k.contact_pairs(x, 8.0)
        assert list(zip(ii.tolist(), jj.tolist())) == [(0, 2)]


@settings(max_examples=150, deadline=None)
@given(st.lists(st.integers(0, 4), min_size=1, max_size=12), st.lists(st.integers(0, 4), min_size=1, max_size=12))
def test_nw_agree(a, b):
    a, b = np.array(a, dtype=np.int64), np.array(b, dtype=np.int64)
    assert compiled.nw_align(a, b, 1.0, 0.0, -1.0) == _kernels_py.nw_align(a, b, 1.0, 0.0, -1.0)
    assert compiled.nw_align(a, b, 2.0, -1.0, -0.5) == _kernels_py.nw_align(a, b, 2.0, -1.0, -0.5)

from __future__ import annotations

import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from exgov import _pykernels, kernels

compiled = pytest.importorskip("exgov._kernels", reason="compiled kernels not built")


@pytest.fixture(autouse=True)
def restore_backend():
    before = kernels.BACKEND
    yield
    kernels.set_backend(before)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 7), st.integers(0, 2**31 - 1), st.booleans())
def test_network_terms_backends_agree(n, seed, grads):
    g = np.random.default_rng(seed)
    Y = g.normal(size=(n, n)) + 1j * g.normal(size=(n, n))
    Y = Y + Y.T
    args = (np.ascontiguousarray(Y.real), np.ascontiguousarray(Y.imag), g.uniform(-1, 1, n),
            g.uniform(0.5, 1.5, n), g.uniform(0.05, 0.5, n))
    a = _pykernels.network_terms(*args, grads)
    b = compiled.network_terms(*args, grads)
    for u, v in zip(a, b):
        if u is None:
            assert v is None
        else:
            assert np.allclose(u, v, rtol=1e-12, atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 8), st.integers(0, 2**31 - 1))
def test_jacobi_backends_agree(n, seed):
    M = np.random.default_rng(seed).normal(size=(n, n))
    S = M + M.T
    wa, Qa, _ = _pykernels.jacobi_eigh(S.copy(), 1e-13)
    wb, Qb, _ = compiled.jacobi_eigh(S.copy(), 1e-13)
    assert np.allclose(np.sort(wa), np.sort(wb), atol=1e-10)
    for w, Q in ((wa, Qa), (wb, Qb)):
        assert np.allclose(Q @ np.diag(w) @ Q.T, S, atol=1e-9)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 8), st.integers(0, 2**31 - 1))
def test_lu_solve_backends_agree(n, seed):
    g = np.random.default_rng(seed)
    A = g.normal(size=(n, n)) + n * np.eye(n)
    b = g.normal(size=n)
    xa, pa = _pykernels.lu_solve(A, b, 1e-13)
    xb, pb = compiled.lu_solve(A, b, 1e-13)
    assert pa == pb == -1
    assert np.allclose(xa, xb, rtol=1e-11, atol=1e-12)


def test_lu_solve_singular_pivot_agrees():
    A = np.array([[1.0, 2.0], [2.0, 4.0]])
    assert _pykernels.lu_solve(A, np.ones(2), 1e-13)[1] == compiled.lu_solve(A, np.ones(2), 1e-13)[1] == 1


def test_whole_simulation_identical_across_backends():
    from conftest import smib_config
    from exgov.scenarios.config import ReferenceStep
    from exgov.scenarios.simulate import run

    cfg = smib_config(t_end=0.3).with_changes(steps=(ReferenceStep(0.05, "G1", U0=1.02),))
    out = {}
    for name in kernels.available_backends():
        kernels.set_backend(name)
        out[name] = run(cfg).x
    a, b = out["python"], out["compiled"]
    assert np.allclose(a, b, rtol=1e-10, atol=1e-12)


def test_set_backend_rejects_unknown():
    with pytest.raises(ValueError):
        kernels.set_backend("fortran")


def test_environment_variable_forces_fallback():
    code = "import exgov.kernels as k; print(k.BACKEND)"
    env = dict(os.environ, EXGOV_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
    env.pop("EXGOV_PURE_PYTHON")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "compiled"

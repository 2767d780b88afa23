from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from exgov.errors import AsymmetricMatrixError, IntegrationError, SingularMatrixError
from exgov.numerics import matrix_rank, rk4_step, solve_linear, sym_eigenvalues, sym_eigh


def integrate(f, x0, t_end, dt):
    x, t = np.array(x0, float), 0.0
    for _ in range(int(round(t_end / dt))):
        x = rk4_step(f, t, x, dt)
        t += dt
    return x


def test_rk4_single_step_matches_taylor_polynomial():
    # for x' = -x one RK4 step is the degree-4 Taylor polynomial of exp(-h)
    h = 0.1
    got = rk4_step(lambda t, x: -x, 0.0, np.array([1.0]), h)[0]
    assert got == pytest.approx(1 - h + h**2 / 2 - h**3 / 6 + h**4 / 24, abs=1e-15)


def test_rk4_error_ratio_is_about_sixteen():
    errs = [abs(integrate(lambda t, x: -x, [1.0], 1.0, dt)[0] - math.exp(-1.0)) for dt in (0.1, 0.05)]
    assert 16 * 0.8 <= errs[0] / errs[1] <= 16 * 1.2


def test_rk4_uses_supplied_first_stage():
    calls = []

    def f(t, x):
        calls.append(t)
        return -x

    x = np.array([2.0])
    a = rk4_step(f, 0.0, x, 0.01)
    calls.clear()
    b = rk4_step(f, 0.0, x, 0.01, k1=-x)
    assert len(calls) == 3 and np.array_equal(a, b)


def test_rk4_time_dependent_rhs():
    # x' = t, x(0) = 0 -> x = t^2 / 2, exact for RK4
    assert integrate(lambda t, x: np.array([t]), [0.0], 2.0, 0.1)[0] == pytest.approx(2.0, abs=1e-12)


def test_rk4_harmonic_oscillator_tracks_exact_solution():
    dt = 1e-3
    n = 6283
    x = integrate(lambda t, z: np.array([z[1], -z[0]]), [1.0, 0.0], n * dt, dt)
    T = n * dt
    assert np.allclose(x, [math.cos(T), -math.sin(T)], atol=1e-10)


def test_rk4_rejects_nonfinite_derivative():
    with pytest.raises(IntegrationError) as info:
        rk4_step(lambda t, x: np.array([0.0, np.nan]), 0.0, np.zeros(2), 0.1)
    assert info.value.index == 1


def test_rk4_rejects_bad_step():
    with pytest.raises(ValueError):
        rk4_step(lambda t, x: x, 0.0, np.zeros(1), 0.0)


def test_sym_eigh_two_by_two_closed_form():
    a, b, c = 3.0, 1.5, -2.0
    mean, rad = (a + c) / 2, math.hypot((a - c) / 2, b)
    w = sym_eigenvalues(np.array([[a, b], [b, c]]))
    assert w == pytest.approx([mean - rad, mean + rad], abs=1e-13)


def test_sym_eigh_diagonal_and_identity():
    w, Q = sym_eigh(np.diag([3.0, -1.0, 2.0]))
    assert list(w) == [-1.0, 2.0, 3.0]
    assert np.allclose(np.abs(Q), np.eye(3)[:, [1, 2, 0]])


sym_matrices = st.integers(1, 9).flatmap(
    lambda n: arrays(np.float64, (n, n), elements=st.floats(-100, 100, allow_nan=False, width=64)))


@settings(max_examples=60, deadline=None)
@given(sym_matrices)
def test_sym_eigh_reconstructs_and_matches_numpy(M):
    S = M + M.T
    w, Q = sym_eigh(S)
    scale = max(1.0, np.linalg.norm(S))
    assert np.max(np.abs(Q @ np.diag(w) @ Q.T - S)) <= 1e-8 * scale
    assert np.allclose(Q.T @ Q, np.eye(len(S)), atol=1e-10)
    assert np.allclose(w, np.linalg.eigvalsh(S), atol=1e-9 * scale)
    assert np.all(np.diff(w) >= 0)


def test_sym_eigh_rejects_asymmetric_and_bad_shapes():
    with pytest.raises(AsymmetricMatrixError):
        sym_eigh(np.array([[1.0, 2.0], [0.0, 1.0]]))
    with pytest.raises(ValueError):
        sym_eigh(np.zeros((2, 3)))
    with pytest.raises(ValueError):
        sym_eigh(np.array([[np.inf]]))


def test_matrix_rank_known_cases():
    assert matrix_rank(np.eye(4)) == 4
    assert matrix_rank(np.zeros((3, 5))) == 0
    assert matrix_rank(np.array([[1.0, 2.0], [2.0, 4.0]])) == 1
    assert matrix_rank(np.outer([1, 2, 3], [4, 5])) == 1
    assert matrix_rank(np.zeros((0, 0))) == 0


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 6), st.integers(0, 2**31 - 1))
def test_matrix_rank_matches_numpy_and_is_invariant_under_row_scaling(m, n, r, seed):
    g = np.random.default_rng(seed)
    r = min(r, m, n)
    M = g.normal(size=(m, r)) @ g.normal(size=(r, n)) if r else np.zeros((m, n))
    expected = np.linalg.matrix_rank(M) if r else 0
    assert matrix_rank(M) == expected
    D = np.diag(10.0 ** g.uniform(-6.0, 6.0, size=m) * g.choice([-1, 1], size=m))
    assert matrix_rank(D @ M) == expected


def test_solve_linear_real_complex_and_matrix_rhs(rng):
    A = rng.normal(size=(5, 5)) + 5 * np.eye(5)
    b = rng.normal(size=5)
    assert np.allclose(solve_linear(A, b), np.linalg.solve(A, b), atol=1e-12)
    Z = A + 1j * rng.normal(size=(5, 5))
    B = rng.normal(size=(5, 3))
    assert np.allclose(solve_linear(Z, B), np.linalg.solve(Z, B), atol=1e-12)


def test_solve_linear_needs_pivoting():
    A = np.array([[0.0, 1.0], [1.0, 0.0]])
    assert np.allclose(solve_linear(A, np.array([2.0, 3.0])), [3.0, 2.0])


def test_solve_linear_singular_reports_pivot():
    A = np.array([[1.0, 2.0, 0.0], [2.0, 4.0, 0.0], [0.0, 0.0, 1.0]])
    with pytest.raises(SingularMatrixError) as info:
        solve_linear(A, np.ones(3))
    assert info.value.pivot == 1


def test_solve_linear_shape_errors():
    with pytest.raises(ValueError):
        solve_linear(np.ones((2, 3)), np.ones(2))
    with pytest.raises(ValueError):
        solve_linear(np.eye(2), np.ones((3, 1)))

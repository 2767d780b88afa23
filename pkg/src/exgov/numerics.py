"""Small dense linear algebra and the fixed-step integrator.

Everything here is a pure function of its inputs. Matrices are plain
``numpy.ndarray`` objects; the routines are meant for systems of at most a
few hundred unknowns.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from exgov import kernels
from exgov.errors import AsymmetricMatrixError, IntegrationError, SingularMatrixError

StepFunction = Callable[[float, np.ndarray], np.ndarray]


def _check_finite(f_val: np.ndarray, t: float) -> np.ndarray:
    if not np.all(np.isfinite(f_val)):
        bad = int(np.flatnonzero(~np.isfinite(f_val))[0])
        raise IntegrationError(bad, t)
    return f_val


def rk4_step(f: StepFunction, t: float, x: np.ndarray, dt: float, k1=None) -> np.ndarray:
    """Advance ``x`` by one classical fourth-order Runge-Kutta step.

    ``k1`` may carry ``f(t, x)`` when the caller has already evaluated it.
    """
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    x = np.asarray(x, dtype=float)
    half = 0.5 * dt
    k1 = _check_finite(np.asarray(f(t, x) if k1 is None else k1, dtype=float), t)
    if k1.shape != x.shape:
        raise ValueError(f"derivative has shape {k1.shape}, state has {x.shape}")
    k2 = _check_finite(np.asarray(f(t + half, x + half * k1), dtype=float), t + half)
    k3 = _check_finite(np.asarray(f(t + half, x + half * k2), dtype=float), t + half)
    k4 = _check_finite(np.asarray(f(t + dt, x + dt * k3), dtype=float), t + dt)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _as_square(S) -> np.ndarray:
    S = np.asarray(S, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1] or S.shape[0] < 1:
        raise ValueError(f"expected a non-empty square matrix, got shape {S.shape}")
    if not np.all(np.isfinite(S)):
        raise ValueError("matrix has non-finite entries")
    return S


def sym_eigh(S, tol: float = 1e-12) -> tuple[np.ndarray, np.ndarray]:
    """Eigen-decomposition of a real symmetric matrix by cyclic Jacobi.

    Returns ascending eigenvalues ``w`` and the accumulated rotation matrix
    ``Q`` (columns are eigenvectors), so that ``S ~= Q @ diag(w) @ Q.T``.
    ``tol`` bounds both the accepted asymmetry and the final off-diagonal
    Frobenius norm, each relative to ``max(1, ||S||_F)``.
    """
    S = _as_square(S)
    scale = max(1.0, float(np.linalg.norm(S)))
    asym = float(np.max(np.abs(S - S.T)))
    if asym > tol * scale:
        raise AsymmetricMatrixError(f"matrix asymmetric by {asym:.3g} (> {tol * scale:.3g})")
    w, Q, _ = kernels.jacobi_eigh(0.5 * (S + S.T), tol * scale)
    order = np.argsort(w, kind="stable")
    return w[order], Q[:, order]


def sym_eigenvalues(S, tol: float = 1e-12) -> np.ndarray:
    return sym_eigh(S, tol)[0]


def matrix_rank(M, tol: float = 1e-8) -> int:
    """Numerical rank by Gaussian elimination with full pivoting.

    Rows are first scaled to unit max-norm, so the result does not depend
    on row scaling; a pivot then counts when it exceeds ``tol``.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    A = np.array(M, dtype=float, copy=True)
    if A.ndim != 2:
        raise ValueError("matrix_rank expects a 2-D array")
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix has non-finite entries")
    if A.size == 0:
        return 0
    norms = np.max(np.abs(A), axis=1)
    A = A[norms > 0.0] / norms[norms > 0.0, None]
    if A.shape[0] == 0:
        return 0
    threshold = tol
    rows, cols = A.shape
    rank = 0
    for _ in range(min(rows, cols)):
        sub = np.abs(A[rank:, rank:])
        flat = int(np.argmax(sub))
        pr, pc = divmod(flat, sub.shape[1])
        if sub[pr, pc] <= threshold:
            break
        pr += rank
        pc += rank
        A[[rank, pr], :] = A[[pr, rank], :]
        A[:, [rank, pc]] = A[:, [pc, rank]]
        pivot = A[rank, rank]
        factors = A[rank + 1:, rank] / pivot
        A[rank + 1:, rank:] -= np.outer(factors, A[rank, rank:])
        rank += 1
        if rank == rows or rank == cols:
            break
    return rank


def solve_linear(M, b, tol: float = 1e-13) -> np.ndarray:
    """Solve ``M x = b`` by Gaussian elimination with partial pivoting.

    Works for real or complex ``M``; ``b`` may be a vector or a matrix of
    right-hand sides. A pivot smaller than ``tol * max|M|`` raises
    :class:`SingularMatrixError` naming the pivot index.
    """
    A = np.asarray(M)
    b = np.asarray(b)
    dtype = np.result_type(A.dtype, b.dtype, float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    if dtype == np.float64 and b.ndim == 1 and b.shape[0] == A.shape[0]:
        if not A.size:
            return np.zeros(0)
        x, pivot = kernels.lu_solve(A, b, tol)
        if pivot >= 0:
            raise SingularMatrixError(int(pivot))
        return x
    A = np.array(A, dtype=dtype, copy=True)
    rhs = np.array(b, dtype=dtype, copy=True)
    vector = rhs.ndim == 1
    if vector:
        rhs = rhs[:, None]
    n = A.shape[0]
    if rhs.shape[0] != n:
        raise ValueError("right-hand side length does not match the matrix")
    threshold = tol * float(np.max(np.abs(A))) if A.size else 0.0
    for k in range(n):
        p = k + int(np.argmax(np.abs(A[k:, k])))
        if not abs(A[p, k]) > threshold:
            raise SingularMatrixError(k)
        if p != k:
            A[[k, p]] = A[[p, k]]
            rhs[[k, p]] = rhs[[p, k]]
        f = A[k + 1:, k] / A[k, k]
        A[k + 1:, k:] -= np.outer(f, A[k, k:])
        rhs[k + 1:] -= np.outer(f, rhs[k])
    x = np.empty_like(rhs)
    for k in range(n - 1, -1, -1):
        x[k] = (rhs[k] - A[k, k + 1:] @ x[k + 1:]) / A[k, k]
    return x[:, 0] if vector else x

"""Pure-Python (numpy) implementations of the hot kernels.

Signatures and return conventions are identical to the compiled module
``exgov._kernels``; :mod:`exgov.kernels` picks one at import time.
"""

from __future__ import annotations

import math

import numpy as np


def network_terms(G, B, delta, eq, xdp, with_gradients=True):
    """Machine outputs on a reduced network and their partial derivatives.

    Returns ``(Pe, Ut, Id, Iq, dPe_dd, dPe_de, dUt_dd, dUt_de)``; the four
    gradient matrices are ``None`` when ``with_gradients`` is false.
    Row ``i`` of a gradient matrix holds derivatives of machine ``i``'s
    quantity with respect to every machine's angle / EMF.
    """
    ang = delta[:, None] - delta[None, :]
    C = np.cos(ang)
    S = np.sin(ang)
    Aq = G * C + B * S
    Ad = G * S - B * C
    Iq = Aq @ eq
    Id = Ad @ eq
    Pe = eq * Iq
    Vq = eq - xdp * Id
    Vx = xdp * Iq
    Ut = np.hypot(Vq, Vx)
    if not with_gradients:
        return Pe, Ut, Id, Iq, None, None, None, None

    n = eq.shape[0]
    diag = np.arange(n)
    Mq = Ad * eq[None, :]
    Mq[diag, diag] = 0.0
    Mq[diag, diag] = -Mq.sum(axis=1)
    Md = -Aq * eq[None, :]
    Md[diag, diag] = 0.0
    Md[diag, diag] = -Md.sum(axis=1)

    dPe_dd = eq[:, None] * Mq
    dPe_de = eq[:, None] * Aq
    dPe_de[diag, diag] += Iq

    dVq_dd = -xdp[:, None] * Md
    dVq_de = -xdp[:, None] * Ad
    dVq_de[diag, diag] += 1.0
    w = (xdp * xdp * Iq)[:, None]
    inv = 1.0 / Ut[:, None]
    dUt_dd = (Vq[:, None] * dVq_dd + w * Mq) * inv
    dUt_de = (Vq[:, None] * dVq_de + w * Aq) * inv
    return Pe, Ut, Id, Iq, dPe_dd, dPe_de, dUt_dd, dUt_de


def jacobi_eigh(S, tol, max_sweeps=100):
    """Cyclic Jacobi rotations on a symmetric matrix.

    Returns ``(w, Q, sweeps)`` with ``S = Q diag(w) Q^T``; ``w`` unsorted.
    Stops once the off-diagonal Frobenius norm is at most ``tol``.
    """
    A = np.array(S, dtype=float, copy=True)
    n = A.shape[0]
    Q = np.eye(n)
    for sweep in range(max_sweeps):
        off = math.sqrt(max(float(np.sum(A * A) - np.sum(np.diag(A) ** 2)), 0.0))
        if off <= tol:
            return np.diag(A).copy(), Q, sweep
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if apq == 0.0:
                    continue
                diff = A[q, q] - A[p, p]
                if abs(apq) < 1e-150 * abs(diff):
                    # large-tau limit, avoids overflow in tau*tau
                    t = apq / diff
                else:
                    tau = diff / (2.0 * apq)
                    if tau >= 0.0:
                        t = 1.0 / (tau + math.sqrt(1.0 + tau * tau))
                    else:
                        t = -1.0 / (-tau + math.sqrt(1.0 + tau * tau))
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = t * c
                ap = A[:, p].copy()
                aq = A[:, q].copy()
                A[:, p] = c * ap - s * aq
                A[:, q] = s * ap + c * aq
                ap = A[p, :].copy()
                aq = A[q, :].copy()
                A[p, :] = c * ap - s * aq
                A[q, :] = s * ap + c * aq
                A[p, q] = A[q, p] = 0.0
                qp = Q[:, p].copy()
                qq = Q[:, q].copy()
                Q[:, p] = c * qp - s * qq
                Q[:, q] = s * qp + c * qq
    return np.diag(A).copy(), Q, max_sweeps


def lu_solve(M, b, tol):
    """Real ``M x = b`` by partial-pivot elimination.

    Returns ``(x, pivot)`` where ``pivot`` is -1 on success, otherwise the
    elimination step whose pivot fell below ``tol * max|M|``.
    """
    A = np.array(M, dtype=float)
    r = np.array(b, dtype=float)
    n = A.shape[0]
    threshold = tol * float(np.max(np.abs(A))) if A.size else 0.0
    for k in range(n):
        p = k + int(np.argmax(np.abs(A[k:, k])))
        if not abs(A[p, k]) > threshold:
            return r, k
        if p != k:
            A[[k, p]] = A[[p, k]]
            r[k], r[p] = r[p], r[k]
        f = A[k + 1:, k] / A[k, k]
        A[k + 1:, k:] -= np.outer(f, A[k, k:])
        r[k + 1:] -= f * r[k]
    x = np.empty(n)
    for k in range(n - 1, -1, -1):
        x[k] = (r[k] - A[k, k + 1:] @ x[k + 1:]) / A[k, k]
    return x, -1

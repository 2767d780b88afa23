# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled versions of the hot kernels (see ``_pykernels`` for the contract)."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sin, cos, sqrt, hypot, fabs

cnp.import_array()


def network_terms(double[:, ::1] G, double[:, ::1] B, double[::1] delta,
                  double[::1] eq, double[::1] xdp, bint with_gradients=True):
    cdef Py_ssize_t n = eq.shape[0]
    cdef Py_ssize_t i, j
    cdef double c, s, aq, ad, ej, sq_i, sd_i, x, vq, u, w

    Pe_a = np.empty(n)
    Ut_a = np.empty(n)
    Id_a = np.empty(n)
    Iq_a = np.empty(n)
    cdef double[::1] Pe = Pe_a
    cdef double[::1] Ut = Ut_a
    cdef double[::1] Id = Id_a
    cdef double[::1] Iq = Iq_a

    Aq_a = np.empty((n, n))
    Ad_a = np.empty((n, n))
    cdef double[:, ::1] Aq = Aq_a
    cdef double[:, ::1] Ad = Ad_a

    for i in range(n):
        sq_i = 0.0
        sd_i = 0.0
        for j in range(n):
            c = cos(delta[i] - delta[j])
            s = sin(delta[i] - delta[j])
            aq = G[i, j] * c + B[i, j] * s
            ad = G[i, j] * s - B[i, j] * c
            Aq[i, j] = aq
            Ad[i, j] = ad
            sq_i += aq * eq[j]
            sd_i += ad * eq[j]
        Iq[i] = sq_i
        Id[i] = sd_i
        Pe[i] = eq[i] * sq_i
        Ut[i] = hypot(eq[i] - xdp[i] * sd_i, xdp[i] * sq_i)

    if not with_gradients:
        return Pe_a, Ut_a, Id_a, Iq_a, None, None, None, None

    dPe_dd_a = np.empty((n, n))
    dPe_de_a = np.empty((n, n))
    dUt_dd_a = np.empty((n, n))
    dUt_de_a = np.empty((n, n))
    cdef double[:, ::1] dPe_dd = dPe_dd_a
    cdef double[:, ::1] dPe_de = dPe_de_a
    cdef double[:, ::1] dUt_dd = dUt_dd_a
    cdef double[:, ::1] dUt_de = dUt_de_a
    cdef double mq, md, mq_sum, md_sum, inv

    for i in range(n):
        x = xdp[i]
        vq = eq[i] - x * Id[i]
        u = Ut[i]
        inv = 1.0 / u
        w = x * x * Iq[i]
        mq_sum = 0.0
        md_sum = 0.0
        for j in range(n):
            if j == i:
                continue
            mq = Ad[i, j] * eq[j]
            md = -Aq[i, j] * eq[j]
            mq_sum += mq
            md_sum += md
            dPe_dd[i, j] = eq[i] * mq
            dUt_dd[i, j] = (vq * (-x * md) + w * mq) * inv
        dPe_dd[i, i] = -eq[i] * mq_sum
        dUt_dd[i, i] = (vq * (x * md_sum) - w * mq_sum) * inv
        for j in range(n):
            dPe_de[i, j] = eq[i] * Aq[i, j]
            dUt_de[i, j] = (vq * (-x * Ad[i, j]) + w * Aq[i, j]) * inv
        dPe_de[i, i] += Iq[i]
        dUt_de[i, i] += vq * inv
    return Pe_a, Ut_a, Id_a, Iq_a, dPe_dd_a, dPe_de_a, dUt_dd_a, dUt_de_a


def jacobi_eigh(S, double tol, int max_sweeps=100):
    A_a = np.array(S, dtype=np.float64, order="C", copy=True)
    cdef double[:, ::1] A = A_a
    cdef Py_ssize_t n = A.shape[0]
    Q_a = np.eye(n)
    cdef double[:, ::1] Q = Q_a
    cdef Py_ssize_t p, q, k
    cdef int sweep
    cdef double off, apq, tau, t, c, s, x, y, diff

    for sweep in range(max_sweeps):
        off = 0.0
        for p in range(n):
            for q in range(n):
                if p != q:
                    off += A[p, q] * A[p, q]
        if sqrt(off) <= tol:
            return np.diag(A_a).copy(), Q_a, sweep
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
                        t = 1.0 / (tau + sqrt(1.0 + tau * tau))
                    else:
                        t = -1.0 / (-tau + sqrt(1.0 + tau * tau))
                c = 1.0 / sqrt(1.0 + t * t)
                s = t * c
                for k in range(n):
                    x = A[k, p]
                    y = A[k, q]
                    A[k, p] = c * x - s * y
                    A[k, q] = s * x + c * y
                for k in range(n):
                    x = A[p, k]
                    y = A[q, k]
                    A[p, k] = c * x - s * y
                    A[q, k] = s * x + c * y
                A[p, q] = 0.0
                A[q, p] = 0.0
                for k in range(n):
                    x = Q[k, p]
                    y = Q[k, q]
                    Q[k, p] = c * x - s * y
                    Q[k, q] = s * x + c * y
    return np.diag(A_a).copy(), Q_a, max_sweeps


def lu_solve(M, b, double tol):
    A_a = np.array(M, dtype=np.float64, order="C")
    r_a = np.array(b, dtype=np.float64)
    cdef double[:, ::1] A = A_a
    cdef double[::1] r = r_a
    cdef Py_ssize_t n = A.shape[0]
    cdef Py_ssize_t i, j, k, p
    cdef double big = 0.0, threshold, f, tmp, s
    for i in range(n):
        for j in range(n):
            if fabs(A[i, j]) > big:
                big = fabs(A[i, j])
    threshold = tol * big
    for k in range(n):
        p = k
        for i in range(k + 1, n):
            if fabs(A[i, k]) > fabs(A[p, k]):
                p = i
        if not fabs(A[p, k]) > threshold:
            return r_a, k
        if p != k:
            for j in range(n):
                tmp = A[k, j]
                A[k, j] = A[p, j]
                A[p, j] = tmp
            tmp = r[k]
            r[k] = r[p]
            r[p] = tmp
        for i in range(k + 1, n):
            f = A[i, k] / A[k, k]
            for j in range(k, n):
                A[i, j] -= f * A[k, j]
            r[i] -= f * r[k]
    x_a = np.empty(n)
    cdef double[::1] x = x_a
    for k in range(n - 1, -1, -1):
        s = r[k]
        for j in range(k + 1, n):
            s -= A[k, j] * x[j]
        x[k] = s / A[k, k]
    return x_a, -1

# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels: Kalman filter pass and the FFBS backward sampler.

Matrices are small (p, n of order 2..10), so factorizations and products are
plain loops over C-contiguous buffers. Anything numerically unusual
(non-SPD pivots, suspicious conditioning) raises KernelDegeneracy and the
caller reruns the pure-numpy path, which owns degenerate-input handling.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport log, sqrt

from ._errors import KernelDegeneracy

cnp.import_array()

BACKEND_NAME = "cython"

cdef double LOG_2PI = 1.8378770664093453


cdef int _chol(const double* a, double* l, int k) noexcept nogil:
    """Lower Cholesky of a row-major k*k matrix; strict upper of l zeroed.

    Returns 0 on success, 1 on a non-positive pivot.
    """
    cdef int i, j, m
    cdef double s
    for i in range(k):
        for j in range(i + 1):
            s = a[i * k + j]
            for m in range(j):
                s -= l[i * k + m] * l[j * k + m]
            if i == j:
                if s <= 0.0:
                    return 1
                l[i * k + i] = sqrt(s)
            else:
                l[i * k + j] = s / l[j * k + j]
        for j in range(i + 1, k):
            l[i * k + j] = 0.0
    return 0


cdef int _jitter_chol(const double* a, double* l, double* scratch, int k) noexcept nogil:
    """Retry Cholesky once with 1e-10 jitter on the diagonal."""
    cdef int i, j
    for i in range(k):
        for j in range(k):
            scratch[i * k + j] = a[i * k + j]
        scratch[i * k + i] += 1e-10
    return _chol(scratch, l, k)


cdef void _chol_solve_cols(const double* l, const double* b, double* x,
                           int k, int m) noexcept nogil:
    """Solve (L L^T) X = B column-wise; B is k*m row-major."""
    cdef int i, j, c
    cdef double s
    for c in range(m):
        for i in range(k):
            s = b[i * m + c]
            for j in range(i):
                s -= l[i * k + j] * x[j * m + c]
            x[i * m + c] = s / l[i * k + i]
        for i in range(k - 1, -1, -1):
            s = x[i * m + c]
            for j in range(i + 1, k):
                s -= l[j * k + i] * x[j * m + c]
            x[i * m + c] = s / l[i * k + i]


cdef void _matmul(const double* a, const double* b, double* out,
                  int n1, int n2, int n3) noexcept nogil:
    """out (n1*n3) = a (n1*n2) @ b (n2*n3), row-major."""
    cdef int i, j, m
    cdef double s
    for i in range(n1):
        for j in range(n3):
            s = 0.0
            for m in range(n2):
                s += a[i * n2 + m] * b[m * n3 + j]
            out[i * n3 + j] = s


cdef void _matmul_bt(const double* a, const double* b, double* out,
                     int n1, int n2, int n3) noexcept nogil:
    """out (n1*n3) = a (n1*n2) @ b^T, with b (n3*n2) row-major."""
    cdef int i, j, m
    cdef double s
    for i in range(n1):
        for j in range(n3):
            s = 0.0
            for m in range(n2):
                s += a[i * n2 + m] * b[j * n2 + m]
            out[i * n3 + j] = s


cdef void _symmetrize(double* a, int k) noexcept nogil:
    cdef int i, j
    cdef double s
    for i in range(k):
        for j in range(i):
            s = 0.5 * (a[i * k + j] + a[j * k + i])
            a[i * k + j] = s
            a[j * k + i] = s


def filter_pass(const double[:, ::1] y, const double[:, :, ::1] F, const double[:, ::1] G,
                const double[:, ::1] W, const double[:, ::1] Sigma, const double[::1] m0,
                const double[:, ::1] P0):
    """Forward Kalman filter; same contract as the pure-Python version."""
    cdef int T = y.shape[0]
    cdef int n = y.shape[1]
    cdef int p = G.shape[0]
    cdef int t, i, j, m
    cdef double s, loglik = 0.0, dmin, dmax, ratio

    s_pred_np = np.empty((T, p))
    P_pred_np = np.empty((T, p, p))
    y_pred_np = np.empty((T, n))
    Om_pred_np = np.empty((T, n, n))
    s_filt_np = np.empty((T, p))
    P_filt_np = np.empty((T, p, p))
    cdef double[:, ::1] s_pred = s_pred_np
    cdef double[:, :, ::1] P_pred = P_pred_np
    cdef double[:, ::1] y_pred = y_pred_np
    cdef double[:, :, ::1] Om_pred = Om_pred_np
    cdef double[:, ::1] s_filt = s_filt_np
    cdef double[:, :, ::1] P_filt = P_filt_np

    cdef int wdim = max(n, p)
    work_np = np.empty((5, wdim * wdim), dtype=float)
    cdef double[:, ::1] w = work_np
    cdef double* tmp_pp = &w[0, 0]   # p*p scratch
    cdef double* FP = &w[1, 0]       # n*p: F @ P_pred
    cdef double* Lom = &w[2, 0]      # n*n factor
    cdef double* X = &w[3, 0]        # n*p solve result
    cdef double* K = &w[4, 0]        # p*n gain
    vec_np = np.empty(2 * wdim + wdim, dtype=float)
    cdef double[::1] vec = vec_np
    cdef double* dev = &vec[0]
    cdef double* q = &vec[wdim]
    cdef double* cur = &vec[2 * wdim]

    P_np = np.array(P0, dtype=float, copy=True)
    cdef double[:, ::1] P = P_np
    for i in range(p):
        cur[i] = m0[i]

    for t in range(T):
        # s_pred = G @ cur
        for i in range(p):
            s = 0.0
            for m in range(p):
                s += G[i, m] * cur[m]
            s_pred[t, i] = s
        # P_pred = G P G^T + W
        _matmul(&G[0, 0], &P[0, 0], tmp_pp, p, p, p)
        _matmul_bt(tmp_pp, &G[0, 0], &P_pred[t, 0, 0], p, p, p)
        for i in range(p):
            for j in range(p):
                P_pred[t, i, j] += W[i, j]
        _symmetrize(&P_pred[t, 0, 0], p)
        # y_pred = F_t s_pred
        for i in range(n):
            s = 0.0
            for m in range(p):
                s += F[t, i, m] * s_pred[t, m]
            y_pred[t, i] = s
        # Om = F Pp F^T + Sigma
        _matmul(&F[t, 0, 0], &P_pred[t, 0, 0], FP, n, p, p)
        _matmul_bt(FP, &F[t, 0, 0], &Om_pred[t, 0, 0], n, p, n)
        for i in range(n):
            for j in range(n):
                Om_pred[t, i, j] += Sigma[i, j]
        _symmetrize(&Om_pred[t, 0, 0], n)
        if _chol(&Om_pred[t, 0, 0], Lom, n):
            raise KernelDegeneracy("predictive covariance not positive definite")
        dmin = Lom[0]
        dmax = Lom[0]
        for i in range(1, n):
            s = Lom[i * n + i]
            if s < dmin:
                dmin = s
            if s > dmax:
                dmax = s
        ratio = (dmax / dmin) * (dmax / dmin)
        if ratio > 1e8:
            raise KernelDegeneracy("predictive covariance ill-conditioned")
        # log-likelihood increment via forward substitution
        for i in range(n):
            dev[i] = y[t, i] - y_pred[t, i]
        s = 0.0
        for i in range(n):
            q[i] = dev[i]
            for j in range(i):
                q[i] -= Lom[i * n + j] * q[j]
            q[i] /= Lom[i * n + i]
            s += q[i] * q[i]
        loglik += -0.5 * (n * LOG_2PI + s)
        for i in range(n):
            loglik -= log(Lom[i * n + i])
        # K = (Om^{-1} (F Pp))^T
        _chol_solve_cols(Lom, FP, X, n, p)
        for i in range(p):
            for j in range(n):
                K[i * n + j] = X[j * p + i]
        # s_filt = s_pred + K dev
        for i in range(p):
            s = s_pred[t, i]
            for m in range(n):
                s += K[i * n + m] * dev[m]
            s_filt[t, i] = s
            cur[i] = s
        # P_filt = P_pred - K (F Pp)
        _matmul(K, FP, &P_filt[t, 0, 0], p, n, p)
        for i in range(p):
            for j in range(p):
                P_filt[t, i, j] = P_pred[t, i, j] - P_filt[t, i, j]
        _symmetrize(&P_filt[t, 0, 0], p)
        for i in range(p):
            for j in range(p):
                P[i, j] = P_filt[t, i, j]

    return s_pred_np, P_pred_np, y_pred_np, Om_pred_np, s_filt_np, P_filt_np, loglik


def ffbs_pass(const double[:, ::1] G, const double[:, ::1] s_pred, const double[:, :, ::1] P_pred,
              const double[:, ::1] s_filt, const double[:, :, ::1] P_filt,
              const double[::1] m0, const double[:, ::1] P0, const double[:, ::1] z):
    """Backward simulation pass; z is (T+1, p) standard normals."""
    cdef int T = s_filt.shape[0]
    cdef int p = s_filt.shape[1]
    cdef int t, i, j, m
    cdef double s

    path_np = np.empty((T + 1, p))
    cdef double[:, ::1] path = path_np
    work_np = np.empty((7, p * p), dtype=float)
    cdef double[:, ::1] w = work_np
    cdef double* Lp = &w[0, 0]
    cdef double* A = &w[1, 0]
    cdef double* X = &w[2, 0]
    cdef double* J = &w[3, 0]
    cdef double* M = &w[4, 0]
    cdef double* H = &w[5, 0]
    cdef double* Lh = &w[6, 0]
    vec_np = np.empty(2 * p, dtype=float)
    cdef double[::1] vec = vec_np
    cdef double* d = &vec[0]
    cdef double* h = &vec[p]
    cdef const double* sf
    cdef const double* Pf

    if _chol(&P_filt[T - 1, 0, 0], Lh, p):
        if _jitter_chol(&P_filt[T - 1, 0, 0], Lh, H, p):
            raise KernelDegeneracy("terminal filtered covariance not PD")
    for i in range(p):
        s = s_filt[T - 1, i]
        for j in range(i + 1):
            s += Lh[i * p + j] * z[T, j]
        path[T, i] = s

    for t in range(T - 1, -1, -1):
        if t == 0:
            sf = &m0[0]
            Pf = &P0[0, 0]
        else:
            sf = &s_filt[t - 1, 0]
            Pf = &P_filt[t - 1, 0, 0]
        # J = (P_pred[t]^{-1} (G Pf))^T
        _matmul(&G[0, 0], Pf, A, p, p, p)
        if _chol(&P_pred[t, 0, 0], Lp, p):
            raise KernelDegeneracy("predicted state covariance not PD in backward pass")
        _chol_solve_cols(Lp, A, X, p, p)
        for i in range(p):
            for j in range(p):
                J[i * p + j] = X[j * p + i]
        # h = sf + J (path[t+1] - s_pred[t])
        for i in range(p):
            d[i] = path[t + 1, i] - s_pred[t, i]
        for i in range(p):
            s = sf[i]
            for m in range(p):
                s += J[i * p + m] * d[m]
            h[i] = s
        # H = Pf - (J Lp)(J Lp)^T
        _matmul(J, Lp, M, p, p, p)
        _matmul_bt(M, M, H, p, p, p)
        for i in range(p):
            for j in range(p):
                H[i * p + j] = Pf[i * p + j] - H[i * p + j]
        _symmetrize(H, p)
        if _chol(H, Lh, p):
            if _jitter_chol(H, Lh, X, p):
                raise KernelDegeneracy("backward conditional covariance not PD")
        for i in range(p):
            s = h[i]
            for j in range(i + 1):
                s += Lh[i * p + j] * z[t, j]
            path[t, i] = s
    return path_np

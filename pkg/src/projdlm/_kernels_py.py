"""Pure-numpy reference implementation of the hot kernels.

The compiled extension (``projdlm._kernels``) mirrors these signatures; this
module is both the import-time fallback and the authority for degenerate
inputs (semidefinite covariances) that the compiled path punts on.
"""

import numpy as np
import scipy.linalg as sla

from ._errors import NumericalError
from ._linalg import LOG_2PI, psd_solve, psd_sqrt, symmetrize

BACKEND_NAME = "python"


def filter_pass(y, F, G, W, Sigma, m0, P0):
    """Forward Kalman filter over pseudo-observations ``y[t] = r_t u_t``.

    Returns stacked per-period statistics plus the accumulated
    log-likelihood sum_t log N(y_t; y_pred_t, Omega_t). Index ``t`` of each
    output array holds the period t+1 statistics.
    """
    y = np.asarray(y, dtype=float)
    T, n = y.shape
    p = G.shape[0]
    s_pred = np.empty((T, p))
    P_pred = np.empty((T, p, p))
    y_pred = np.empty((T, n))
    Om_pred = np.empty((T, n, n))
    s_filt = np.empty((T, p))
    P_filt = np.empty((T, p, p))

    s = np.asarray(m0, dtype=float)
    P = symmetrize(np.asarray(P0, dtype=float))
    loglik = 0.0
    for t in range(T):
        Ft = F[t]
        sp = G @ s
        Pp = symmetrize(G @ P @ G.T + W)
        yp = Ft @ sp
        Om = symmetrize(Ft @ Pp @ Ft.T + Sigma)
        try:
            L = np.linalg.cholesky(Om)
        except np.linalg.LinAlgError as exc:
            cond = np.linalg.cond(Om)
            raise NumericalError(
                f"predictive covariance singular at t={t + 1} (cond={cond:.3e})"
            ) from exc
        if np.diag(L).min() <= np.sqrt(np.max(np.diag(Om))) * 1e-9:
            cond = np.linalg.cond(Om)
            if cond > 1e12:
                raise NumericalError(
                    f"predictive covariance ill-conditioned at t={t + 1} (cond={cond:.3e})"
                )
        dev = y[t] - yp
        sol = sla.solve_triangular(L, dev, lower=True, check_finite=False)
        loglik += -0.5 * (n * LOG_2PI + 2.0 * np.sum(np.log(np.diag(L))) + sol @ sol)
        # gain K = Pp F^T Om^{-1}
        FP = Ft @ Pp
        K = sla.cho_solve((L, True), FP, check_finite=False).T
        s = sp + K @ dev
        P = symmetrize(Pp - K @ FP)

        s_pred[t] = sp
        P_pred[t] = Pp
        y_pred[t] = yp
        Om_pred[t] = Om
        s_filt[t] = s
        P_filt[t] = P
    return s_pred, P_pred, y_pred, Om_pred, s_filt, P_filt, loglik


def ffbs_pass(G, s_pred, P_pred, s_filt, P_filt, m0, P0, z):
    """Backward-sampling pass of the simulation smoother.

    ``z`` is a (T+1, p) block of standard normals consumed back-to-front
    (z[T] seeds s_T, z[0] seeds s_0), so a caller drawing them from a seeded
    generator gets reproducible paths. Returns the sampled path s_{0:T} as a
    (T+1, p) array.
    """
    T, p = s_filt.shape
    path = np.empty((T + 1, p))
    path[T] = s_filt[T - 1] + psd_sqrt(P_filt[T - 1]) @ z[T]
    for t in range(T - 1, -1, -1):
        if t == 0:
            sf, Pf = np.asarray(m0, dtype=float), np.asarray(P0, dtype=float)
        else:
            sf, Pf = s_filt[t - 1], P_filt[t - 1]
        # J = Pf G^T P_pred[t]^{-1}; P_pred[t] is the t+1|t covariance
        J = psd_solve(P_pred[t], G @ Pf).T
        h = sf + J @ (path[t + 1] - s_pred[t])
        H = symmetrize(Pf - J @ P_pred[t] @ J.T)
        path[t] = h + psd_sqrt(H) @ z[t]
    return path

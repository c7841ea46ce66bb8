"""Small dense linear-algebra helpers built on Cholesky factorizations.

Everything here tolerates positive *semi*definite inputs where noted, since
degenerate covariances (W = 0, P0 = 0) are supported model configurations.
"""

import numpy as np
import scipy.linalg as sla

from ._errors import NumericalError

LOG_2PI = np.log(2.0 * np.pi)


def symmetrize(a):
    """Return the symmetric part of a square matrix."""
    return 0.5 * (a + a.T)


def chol_lower(a):
    """Cholesky factor (lower) of an SPD matrix; NumericalError on failure."""
    try:
        return np.linalg.cholesky(a)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"matrix of shape {a.shape} is not positive definite") from exc


def psd_sqrt(a, jitter=1e-10, neg_tol=-1e-8):
    """A square root ``S`` with ``S S^T = a`` for a PSD matrix.

    Tries Cholesky first; falls back to an eigendecomposition with
    eigenvalues clipped at zero. Eigenvalues below ``neg_tol`` (relative to
    the matrix scale) trigger one jitter retry before failing.
    """
    a = symmetrize(np.asarray(a, dtype=float))
    try:
        return np.linalg.cholesky(a)
    except np.linalg.LinAlgError:
        pass
    scale = max(1.0, float(np.max(np.abs(a))))
    vals, vecs = np.linalg.eigh(a)
    if vals.min() < neg_tol * scale:
        a = a + jitter * np.eye(a.shape[0])
        vals, vecs = np.linalg.eigh(a)
        if vals.min() < neg_tol * scale:
            raise NumericalError(
                f"covariance indefinite beyond tolerance (min eigenvalue {vals.min():.3e})"
            )
    return vecs * np.sqrt(np.clip(vals, 0.0, None))


def psd_solve(a, b, neg_tol=-1e-8):
    """Solve ``a x = b`` for symmetric PSD ``a``; pseudo-inverse fallback."""
    a = symmetrize(np.asarray(a, dtype=float))
    try:
        c = sla.cho_factor(a, lower=True, check_finite=False)
        return sla.cho_solve(c, b, check_finite=False)
    except (np.linalg.LinAlgError, sla.LinAlgError, ValueError):
        scale = max(1.0, float(np.max(np.abs(a))))
        if np.linalg.eigvalsh(a).min() < neg_tol * scale:
            raise NumericalError("matrix indefinite beyond tolerance in psd_solve")
        return np.linalg.pinv(a) @ b


def mvn_logpdf(x, mean, cov):
    """Log density of N(mean, cov) at x (1-D input or (m, n) batch).

    ``cov`` must be SPD; uses a single Cholesky factorization.
    """
    x = np.asarray(x, dtype=float)
    mean = np.asarray(mean, dtype=float)
    n = cov.shape[0]
    L = chol_lower(cov)
    dev = np.atleast_2d(x - mean)
    sol = sla.solve_triangular(L, dev.T, lower=True, check_finite=False)
    maha = np.sum(sol**2, axis=0)
    logdet = 2.0 * np.sum(np.log(np.diag(L)))
    out = -0.5 * (n * LOG_2PI + logdet + maha)
    return out[0] if x.ndim == 1 else out


def mvn_logpdf_chol(dev, L):
    """Same as mvn_logpdf but with precomputed residuals and factor."""
    n = L.shape[0]
    dev = np.atleast_2d(dev)
    sol = sla.solve_triangular(L, dev.T, lower=True, check_finite=False)
    maha = np.sum(sol**2, axis=0)
    logdet = 2.0 * np.sum(np.log(np.diag(L)))
    return -0.5 * (n * LOG_2PI + logdet + maha)


def quad_form_inv(a, x):
    """x^T a^{-1} x for SPD ``a`` and 1-D ``x``."""
    return float(x @ psd_solve(a, x))


def logsumexp(v):
    """Stable log(sum(exp(v))) for a 1-D array; -inf if all entries are."""
    v = np.asarray(v, dtype=float)
    m = np.max(v)
    if not np.isfinite(m):
        return m
    return m + np.log(np.sum(np.exp(v - m)))
